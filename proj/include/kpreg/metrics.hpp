#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpreg/geometry.hpp"
#include "kpreg/losses.hpp"
#include "kpreg/optimizer.hpp"
#include "kpreg/sample.hpp"

namespace kpreg {

struct PckConfig {
    double alpha = 0.1; ///< threshold in normalized units, 0 < alpha <= 1

    /// Throws ConfigInvalidError.
    void validate() const;
};

struct PckReport {
    std::vector<std::string> pair_ids;
    std::vector<double> per_pair;
    double mean = 0.0;
    std::map<std::string, double> per_category;

    friend bool operator==(const PckReport &, const PckReport &) = default;
};

/// Fraction of corresponded source points whose warp lands within alpha of
/// the true target (inclusive). Throws EmptyCorrespondenceError.
double pck(const Transform &transform, std::span<const Point2D> pa, std::span<const Point2D> pb,
           const CorrespondenceMap &c, const PckConfig &cfg);

/// PCK of every fitted theta_ab against its sample's correspondence, with
/// per-category means. Throws EmptyBatchError, EmptyCorrespondenceError.
PckReport evaluate_batch(std::span<const RegistrationResult> results, std::span<const PairSample> samples,
                         const PckConfig &cfg);

} // namespace kpreg

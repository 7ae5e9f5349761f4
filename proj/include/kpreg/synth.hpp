#pragma once

// Synthetic keypoint pairs with known ground truth, and the pair-combination
// helpers used to build weakly labeled training sets.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kpreg/sample.hpp"

namespace kpreg {

/// Seeded random source with platform-independent output: the engine is
/// std::mt19937_64 (fully specified by the standard) and every distribution
/// is implemented here rather than taken from <random>.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal (Box-Muller, one value per call).
    double normal();
    /// Uniform integer in [0, n), n > 0.
    std::size_t index(std::size_t n);

    template <class T> void shuffle(std::vector<T> &v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to derive per-pair seeds from a batch seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

enum class TransformFamily { affine, tps };
enum class Regime { easy, hard };

std::string to_string(Regime r);
Regime parse_regime(const std::string &s); ///< "easy" or "hard"

struct SynthConfig {
    std::size_t n_points = 20;
    TransformFamily transform_family = TransformFamily::affine;
    double rotation_min = 0.0;  ///< degrees; the sign is drawn separately
    double rotation_max = 30.0; ///< degrees
    double scale_lo = 0.8;
    double scale_hi = 1.2;
    double translation_max = 0.2;     ///< per axis, normalized units
    double tps_displacement_max = 0.05; ///< per control-point coordinate
    double drop_fraction = 0.2;       ///< dropped independently from each side
    double noise_sigma = 0.01;        ///< per-axis Gaussian, truncated at 3 sigma in norm
    std::uint64_t seed = 0;
    /// Redraw until every target keypoint lies inside the unit square.
    bool keep_in_bounds = true;
    std::optional<std::string> category;
    ImageSize image_size{240.0, 240.0};

    /// Throws ConfigInvalidError.
    void validate() const;
};

/// easy: rotation <= 30 deg, drop 0.2. hard: rotation 45-60 deg, drop 0.3.
/// Both: 20 points, scale [0.8, 1.2], translation <= 0.2, noise 0.01.
SynthConfig regime_config(Regime regime, std::uint64_t seed);

/// Throws ConfigInvalidError.
PairSample generate_pair(const SynthConfig &cfg);

/// `count` pairs; pair i is generated with seed mix_seed(cfg.seed, i).
std::vector<PairSample> generate_batch(const SynthConfig &cfg, std::size_t count);

/// New pairs (source image of one original pair, target image of another) for
/// every unordered combination of original pairs within a category, capped per
/// category. The new pairs carry no correspondence.
std::vector<PairSample> combine_category_pairs(std::span<const PairSample> samples, std::size_t cap_per_category);

/// Drops training pairs that duplicate a test pair in either orientation.
std::vector<PairSample> exclude_test_flips(std::span<const PairSample> train, std::span<const PairSample> test);

/// Mirror both keypoint sets horizontally (x -> 1 - x).
PairSample hflip_pair(const PairSample &sample);

} // namespace kpreg

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpreg/geometry.hpp"
#include "kpreg/losses.hpp"
#include "kpreg/sample.hpp"

namespace kpreg {

enum class Stage { affine, tps };
enum class Model { affine, tps, affine_tps };

std::vector<Stage> stages_for(Model m);
std::string to_string(Model m);
Model parse_model(const std::string &s); ///< "affine", "tps", "affine+tps"

struct OptimizerConfig {
    // Adam. The rate applies directly to transform parameters.
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    int max_iters = 500;            ///< per stage
    double convergence_tol = 1e-7;  ///< change of the 10-iteration mean loss
    std::vector<Stage> stage_schedule{Stage::affine};

    // The rate is halved after `patience` iterations without a new best loss;
    // a stage stops once it falls below learning_rate * min_lr_fraction.
    double lr_decay = 0.5;
    int patience = 25;
    double min_lr_fraction = 1e-3;

    double tps_regularization = 0.0;

    // Initial hypotheses: start k rotates the source by 2 pi k / rotation_starts
    // about its centroid and, with center_init, shifts that centroid onto the
    // target centroid (theta_ba starts at the inverse). The start with the
    // lowest final loss wins. One start without center_init is the identity.
    int rotation_starts = 12;
    bool center_init = true;

    /// Throws ConfigInvalidError.
    void validate() const;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update in place, at rate `lr` (defaults to
/// cfg.learning_rate). Throws LengthMismatchError.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState &state,
               const OptimizerConfig &cfg, std::optional<double> lr = std::nullopt);

struct RegistrationResult {
    Transform theta_ab;
    Transform theta_ba;
    std::vector<double> loss_trace; ///< loss at the start of every iteration
    int iterations_used = 0;
    bool converged = false;
    double final_loss = 0.0; ///< loss of the returned parameters
    int start_index = 0;     ///< which initial hypothesis produced the fit
};

/// Initial affine warp of start k (see OptimizerConfig::rotation_starts).
AffineParams initial_hypothesis(const PairSample &pair, const OptimizerConfig &cfg, int k);

/// Fits theta_ab and theta_ba to the pair by Adam descent on `spec` from each
/// initial hypothesis, re-assigning nearest neighbors every iteration. An
/// affine stage followed by a TPS stage continues from the affine fit as
/// tps(affine(p)) with only the TPS part free; a TPS-only schedule composes
/// the TPS with the frozen initial affine warp.
/// Throws EmptySetError, ConfigInvalidError, DivergenceError.
RegistrationResult register_pair(const PairSample &pair, const LossSpec &spec, const OptimizerConfig &cfg);

struct GradientEntry {
    bool backward = false; ///< false: theta_ab parameter, true: theta_ba parameter
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
    bool flagged = false;
};

struct GradientReport {
    std::vector<GradientEntry> entries;
    double max_rel_error = 0.0;
    std::size_t flagged = 0;
    double min_residual = 0.0; ///< see smallest_residual()
    bool passed() const { return flagged == 0; }
};

struct GradientCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-5;
    /// Test hook: add +1 to this analytic entry (theta_ab entries, then theta_ba).
    std::optional<std::size_t> inject_fault;
};

/// |a - n| / max(|a|, |n|, 1e-3). Below the floor the comparison is absolute:
/// central differences at step 1e-5 carry ~1e-11 of rounding error.
double gradient_relative_error(double analytic, double numeric);

/// Compares analytic gradients with central differences of the loss, with the
/// assignments frozen at the given parameters.
GradientReport gradient_check(const LossSpec &spec, const PairSample &pair, const Transform &theta_ab,
                              const Transform &theta_ba, const GradientCheckOptions &opts = {});

} // namespace kpreg

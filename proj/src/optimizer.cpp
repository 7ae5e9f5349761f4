#include "kpreg/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "kpreg/error.hpp"

namespace kpreg {

std::vector<Stage> stages_for(Model m) {
    switch (m) {
    case Model::affine: return {Stage::affine};
    case Model::tps: return {Stage::tps};
    case Model::affine_tps: return {Stage::affine, Stage::tps};
    }
    return {};
}

std::string to_string(Model m) {
    switch (m) {
    case Model::affine: return "affine";
    case Model::tps: return "tps";
    case Model::affine_tps: return "affine+tps";
    }
    return "?";
}

Model parse_model(const std::string &s) {
    if (s == "affine") return Model::affine;
    if (s == "tps") return Model::tps;
    if (s == "affine+tps") return Model::affine_tps;
    throw ConfigInvalidError("unknown model '" + s + "'");
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigInvalidError("learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigInvalidError("beta1 and beta2 must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigInvalidError("epsilon must be positive");
    if (max_iters <= 0) throw ConfigInvalidError("max_iters must be positive");
    if (!(convergence_tol >= 0.0)) throw ConfigInvalidError("convergence_tol must be nonnegative");
    if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw ConfigInvalidError("lr_decay must lie in (0, 1)");
    if (patience <= 0) throw ConfigInvalidError("patience must be positive");
    if (!(min_lr_fraction > 0.0 && min_lr_fraction <= 1.0)) throw ConfigInvalidError("min_lr_fraction must lie in (0, 1]");
    if (!(tps_regularization >= 0.0)) throw ConfigInvalidError("tps_regularization must be nonnegative");
    if (rotation_starts < 1) throw ConfigInvalidError("rotation_starts must be at least 1");
    if (stage_schedule.empty() || stage_schedule.size() > 2) {
        throw ConfigInvalidError("stage schedule must hold one or two stages");
    }
    if (stage_schedule.size() == 2 && !(stage_schedule[0] == Stage::affine && stage_schedule[1] == Stage::tps)) {
        throw ConfigInvalidError("a two-stage schedule must be affine then tps");
    }
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState &state,
               const OptimizerConfig &cfg, std::optional<double> lr) {
    if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw LengthMismatchError("adam_step: params, gradient and moments differ in length");
    }
    const double rate = lr.value_or(cfg.learning_rate);
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

namespace {

// The free part of one side's transform during a stage, plus the frozen inner
// warp it is composed with (if any).
struct StageSide {
    Transform free;
    std::optional<Transform> frozen_inner;

    Transform build(std::span<const double> params) const {
        Transform t = free.with_params(params);
        return frozen_inner ? compose(t, *frozen_inner) : t;
    }
};

StageSide enter_stage(Stage stage, const Transform &current, double lambda) {
    if (stage == Stage::affine) {
        return {current, std::nullopt};
    }
    TpsParams zero;
    zero.regularization = lambda;
    Transform tps = Transform::tps(zero);
    if (current.kind() == Transform::Kind::affine && current.affine_params() == AffineParams::identity()) {
        return {tps, std::nullopt};
    }
    return {tps, current};
}

Point2D centroid(std::span<const Point2D> pts) {
    Point2D c;
    for (const auto &p : pts) c = c + p;
    const double n = static_cast<double>(pts.size());
    return {c.x / n, c.y / n};
}

double window_mean(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

constexpr std::size_t kSmoothingWindow = 10;
constexpr int kDivergenceRun = 50;
constexpr double kDivergenceFactor = 10.0;
// A start that is already aligned has a loss at rounding level; growth from
// there is not divergence.
constexpr double kDivergenceFloor = 1e-3;

RegistrationResult run_from(const PairSample &pair, const LossSpec &spec, const OptimizerConfig &cfg,
                            const AffineParams &init) {
    const std::span<const Point2D> pa(pair.source);
    const std::span<const Point2D> pb(pair.target);

    RegistrationResult result;
    result.theta_ab = Transform::affine(init);
    result.theta_ba = Transform::affine(invert_affine(init));
    result.converged = true;

    double initial_loss = -1.0;
    int divergent_run = 0;

    for (std::size_t s = 0; s < cfg.stage_schedule.size(); ++s) {
        const Stage stage = cfg.stage_schedule[s];
        const StageSide ab = enter_stage(stage, result.theta_ab, cfg.tps_regularization);
        const StageSide ba = enter_stage(stage, result.theta_ba, cfg.tps_regularization);
        const std::size_t n_ab = ab.free.param_count();
        const std::size_t n_ba = ba.free.param_count();

        std::vector<double> params = ab.free.params();
        const std::vector<double> ba_params = ba.free.params();
        params.insert(params.end(), ba_params.begin(), ba_params.end());
        const std::span<const double> all(params);

        AdamState state(params.size());
        std::vector<double> grad(params.size());
        std::vector<double> best_params = params;
        double best_loss = std::numeric_limits<double>::infinity();
        double lr = cfg.learning_rate;
        const double min_lr = cfg.learning_rate * cfg.min_lr_fraction;
        int since_best = 0;
        bool stage_converged = false;
        const std::size_t stage_begin = result.loss_trace.size();

        for (int it = 0; it < cfg.max_iters; ++it) {
            const Transform t_ab = ab.build(all.first(n_ab));
            const Transform t_ba = ba.build(all.subspan(n_ab, n_ba));
            const LossValue lv = evaluate_loss(spec, t_ab, t_ba, pa, pb);
            if (!std::isfinite(lv.value)) {
                throw DivergenceError("non-finite loss on pair '" + pair.pair_id + "'");
            }
            result.loss_trace.push_back(lv.value);

            if (initial_loss < 0.0) initial_loss = lv.value;
            divergent_run =
                lv.value > kDivergenceFactor * std::max(initial_loss, kDivergenceFloor) ? divergent_run + 1 : 0;
            if (divergent_run >= kDivergenceRun) {
                throw DivergenceError("loss stayed above 10x its initial value for 50 iterations on pair '" +
                                      pair.pair_id + "'");
            }

            if (lv.value < best_loss) {
                best_loss = lv.value;
                best_params = params;
                since_best = 0;
            } else {
                ++since_best;
            }
            if (lv.value == 0.0) {
                stage_converged = true;
                break;
            }
            const std::span<const double> trace(result.loss_trace.data() + stage_begin,
                                                result.loss_trace.size() - stage_begin);
            if (trace.size() >= 2 * kSmoothingWindow) {
                const double recent = window_mean(trace.last(kSmoothingWindow));
                const double before = window_mean(trace.last(2 * kSmoothingWindow).first(kSmoothingWindow));
                if (std::abs(before - recent) < cfg.convergence_tol) {
                    stage_converged = true;
                    break;
                }
            }
            if (since_best >= cfg.patience) {
                lr *= cfg.lr_decay;
                since_best = 0;
                if (lr < min_lr) {
                    stage_converged = true;
                    break;
                }
            }

            // Only the free part of a composition is trained; its gradient
            // entries come first.
            std::copy_n(lv.grad_fwd.begin(), n_ab, grad.begin());
            std::copy_n(lv.grad_bwd.begin(), n_ba, grad.begin() + static_cast<std::ptrdiff_t>(n_ab));
            adam_step(params, grad, state, cfg, lr);
        }

        const std::span<const double> best(best_params);
        result.theta_ab = ab.build(best.first(n_ab));
        result.theta_ba = ba.build(best.subspan(n_ab, n_ba));
        result.converged = result.converged && stage_converged;
    }

    result.iterations_used = static_cast<int>(result.loss_trace.size());
    result.final_loss = evaluate_loss(spec, result.theta_ab, result.theta_ba, pa, pb).value;
    return result;
}

} // namespace

AffineParams initial_hypothesis(const PairSample &pair, const OptimizerConfig &cfg, int k) {
    if (cfg.rotation_starts == 1 && !cfg.center_init) return AffineParams::identity();
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(cfg.rotation_starts);
    const Point2D ca = centroid(pair.source);
    const Point2D shift = cfg.center_init ? centroid(pair.target) - ca : Point2D{};
    return AffineParams::similarity(angle, 1.0, ca, shift);
}

RegistrationResult register_pair(const PairSample &pair, const LossSpec &spec, const OptimizerConfig &cfg) {
    cfg.validate();
    if (pair.source.empty() || pair.target.empty()) {
        throw EmptySetError("pair '" + pair.pair_id + "' has an empty keypoint set");
    }
    RegistrationResult best;
    for (int k = 0; k < cfg.rotation_starts; ++k) {
        RegistrationResult r = run_from(pair, spec, cfg, initial_hypothesis(pair, cfg, k));
        if (k == 0 || r.final_loss < best.final_loss) {
            r.start_index = k;
            best = std::move(r);
        }
        if (best.final_loss == 0.0) break;
    }
    return best;
}

double gradient_relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / scale;
}

GradientReport gradient_check(const LossSpec &spec, const PairSample &pair, const Transform &theta_ab,
                              const Transform &theta_ba, const GradientCheckOptions &opts) {
    const std::span<const Point2D> pa(pair.source);
    const std::span<const Point2D> pb(pair.target);
    const LossAssignments frozen = compute_assignments(spec, theta_ab, theta_ba, pa, pb);
    const LossValue lv = evaluate_loss(spec, theta_ab, theta_ba, pa, pb, frozen);

    GradientReport report;
    report.min_residual = smallest_residual(spec, theta_ab, theta_ba, pa, pb, frozen);
    auto check_side = [&](bool backward) {
        const Transform &t = backward ? theta_ba : theta_ab;
        const std::vector<double> &analytic = backward ? lv.grad_bwd : lv.grad_fwd;
        std::vector<double> p = t.params();
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double saved = p[k];
            p[k] = saved + opts.step;
            const Transform plus = t.with_params(p);
            p[k] = saved - opts.step;
            const Transform minus = t.with_params(p);
            p[k] = saved;

            const double f_plus = backward ? evaluate_loss(spec, theta_ab, plus, pa, pb, frozen).value
                                           : evaluate_loss(spec, plus, theta_ba, pa, pb, frozen).value;
            const double f_minus = backward ? evaluate_loss(spec, theta_ab, minus, pa, pb, frozen).value
                                            : evaluate_loss(spec, minus, theta_ba, pa, pb, frozen).value;

            GradientEntry e;
            e.backward = backward;
            e.index = k;
            e.analytic = analytic[k];
            if (opts.inject_fault && *opts.inject_fault == report.entries.size()) e.analytic += 1.0;
            e.numeric = (f_plus - f_minus) / (2.0 * opts.step);
            e.rel_error = gradient_relative_error(e.analytic, e.numeric);
            e.flagged = !(e.rel_error <= opts.tolerance);
            report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
            report.flagged += e.flagged ? 1 : 0;
            report.entries.push_back(e);
        }
    };
    check_side(false);
    check_side(true);
    return report;
}

} // namespace kpreg

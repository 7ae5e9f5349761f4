#pragma once

// Shared fixtures and independent reference computations for the tests.
//
// The reference functions here deliberately avoid the library's own helpers:
// losses are computed straight from their defining sums with plain loops, and
// the thin-plate spline is solved from scratch per evaluation by Gaussian
// elimination on the bordered kernel system.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "kpreg/geometry.hpp"
#include "kpreg/losses.hpp"
#include "kpreg/sample.hpp"
#include "kpreg/synth.hpp"

namespace kpreg::testing {

inline PointSet random_points(Rng &rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
    PointSet pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(lo, hi), rng.uniform(lo, hi)});
    return pts;
}

/// Identity plus uniform noise of the given amplitude on every entry.
inline AffineParams random_affine(Rng &rng, double amplitude = 0.3) {
    AffineParams a;
    a.a11 += rng.uniform(-amplitude, amplitude);
    a.a12 += rng.uniform(-amplitude, amplitude);
    a.tx += rng.uniform(-amplitude, amplitude);
    a.a21 += rng.uniform(-amplitude, amplitude);
    a.a22 += rng.uniform(-amplitude, amplitude);
    a.ty += rng.uniform(-amplitude, amplitude);
    return a;
}

inline TpsParams random_tps(Rng &rng, double amplitude = 0.1, double regularization = 0.0) {
    TpsParams t;
    for (double &d : t.displacements) d = rng.uniform(-amplitude, amplitude);
    t.regularization = regularization;
    return t;
}

// ---------------------------------------------------------------- NN oracle

struct NearestOracle {
    std::vector<std::size_t> indices;
    std::vector<double> distances;
};

/// Double loop over squared distances, keeping the first minimum seen.
inline NearestOracle brute_force_nn(const PointSet &queries, const PointSet &refs) {
    NearestOracle out;
    for (const Point2D &q : queries) {
        std::size_t best = 0;
        double best_sq = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < refs.size(); ++j) {
            const double dx = q.x - refs[j].x;
            const double dy = q.y - refs[j].y;
            const double sq = dx * dx + dy * dy;
            if (sq < best_sq) {
                best_sq = sq;
                best = j;
            }
        }
        out.indices.push_back(best);
        out.distances.push_back(std::sqrt(best_sq));
    }
    return out;
}

// ------------------------------------------------------------ loss oracles

inline double norm(Point2D p) { return std::sqrt(p.x * p.x + p.y * p.y); }

inline double min_distance(Point2D q, const PointSet &refs) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point2D &r : refs) best = std::min(best, norm(q - r));
    return best;
}

/// (1/M) sum_a min_b ||T(a) - b||
inline double oracle_nn(const Transform &t, const PointSet &from, const PointSet &to) {
    double s = 0.0;
    for (const Point2D &p : from) s += min_distance(t.apply(p), to);
    return s / static_cast<double>(from.size());
}

/// nn term plus (1/N) sum_b min_a ||T(a) - b||
inline double oracle_cd(const Transform &t, const PointSet &from, const PointSet &to) {
    PointSet warped;
    for (const Point2D &p : from) warped.push_back(t.apply(p));
    double s = 0.0;
    for (const Point2D &q : to) s += min_distance(q, warped);
    return oracle_nn(t, from, to) + s / static_cast<double>(to.size());
}

/// (1/M) sum_a ||back(fwd(a)) - a||
inline double oracle_cycle(const Transform &fwd, const Transform &back, const PointSet &pts) {
    double s = 0.0;
    for (const Point2D &p : pts) s += norm(back.apply(fwd.apply(p)) - p);
    return s / static_cast<double>(pts.size());
}

inline double oracle_one_side(LossFamily f, const Transform &t, const Transform &other, const PointSet &from,
                              const PointSet &to) {
    const bool chamfer = f == LossFamily::cd || f == LossFamily::cd_cyc;
    const bool cyclic = f == LossFamily::nn_cyc || f == LossFamily::cd_cyc;
    double v = chamfer ? oracle_cd(t, from, to) : oracle_nn(t, from, to);
    if (cyclic) v += oracle_cycle(t, other, from);
    return v;
}

inline double oracle_loss(const LossSpec &spec, const Transform &ab, const Transform &ba, const PointSet &pa,
                          const PointSet &pb) {
    double v = 0.0;
    if (spec.direction != Direction::backward) v += oracle_one_side(spec.family, ab, ba, pa, pb);
    if (spec.direction != Direction::forward) v += oracle_one_side(spec.family, ba, ab, pb, pa);
    return v;
}

// ------------------------------------------------------------- TPS oracle

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
template <std::size_t N> std::array<double, N> solve_dense(std::array<std::array<double, N>, N> a, std::array<double, N> b) {
    for (std::size_t col = 0; col < N; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < N; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        }
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < N; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < N; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::array<double, N> x{};
    for (std::size_t i = N; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < N; ++c) s -= a[i][c] * x[c];
        x[i] = s / a[i][i];
    }
    return x;
}

inline double oracle_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

/// Fits the standard TPS interpolant to the displaced control points and
/// evaluates it at p. The unknowns are the absolute target coordinates, not
/// displacements, so this shares no algebra with the library.
inline Point2D oracle_tps(const TpsParams &params, Point2D p) {
    constexpr std::size_t K = 9;
    constexpr std::size_t N = K + 3;
    std::array<Point2D, K> ctrl;
    for (std::size_t iy = 0; iy < 3; ++iy) {
        for (std::size_t ix = 0; ix < 3; ++ix) ctrl[iy * 3 + ix] = {0.5 * static_cast<double>(ix), 0.5 * static_cast<double>(iy)};
    }
    std::array<std::array<double, N>, N> a{};
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) {
            const double dx = ctrl[i].x - ctrl[j].x, dy = ctrl[i].y - ctrl[j].y;
            a[i][j] = oracle_kernel(dx * dx + dy * dy) + (i == j ? params.regularization : 0.0);
        }
        a[i][K] = a[K][i] = 1.0;
        a[i][K + 1] = a[K + 1][i] = ctrl[i].x;
        a[i][K + 2] = a[K + 2][i] = ctrl[i].y;
    }
    std::array<double, N> bx{}, by{};
    for (std::size_t i = 0; i < K; ++i) {
        bx[i] = ctrl[i].x + params.displacements[2 * i];
        by[i] = ctrl[i].y + params.displacements[2 * i + 1];
    }
    const auto cx = solve_dense<N>(a, bx);
    const auto cy = solve_dense<N>(a, by);
    Point2D out{cx[K] + cx[K + 1] * p.x + cx[K + 2] * p.y, cy[K] + cy[K + 1] * p.x + cy[K + 2] * p.y};
    for (std::size_t i = 0; i < K; ++i) {
        const double dx = p.x - ctrl[i].x, dy = p.y - ctrl[i].y;
        const double u = oracle_kernel(dx * dx + dy * dy);
        out.x += cx[i] * u;
        out.y += cy[i] * u;
    }
    return out;
}

// ---------------------------------------------------- gradient fixtures

/// Every residual entering the loss must be at least this long: the norm has a
/// kink at zero, where central differences are not meaningful.
inline constexpr double kGeneralPosition = 5e-2;

enum class FixtureModel { affine, tps, composed };

inline Transform random_transform(FixtureModel model, Rng &rng) {
    switch (model) {
    case FixtureModel::affine: return Transform::affine(random_affine(rng));
    case FixtureModel::tps: return Transform::tps(random_tps(rng));
    case FixtureModel::composed:
        return compose(Transform::tps(random_tps(rng)), Transform::affine(random_affine(rng)));
    }
    return Transform::identity();
}

struct GradientFixture {
    PairSample pair;
    Transform ab;
    Transform ba;
};

/// Random pair with 3 to 10 points per side and random transforms, redrawn
/// until the instance is in general position.
inline GradientFixture general_position_fixture(const LossSpec &spec, FixtureModel model, Rng &rng) {
    GradientFixture f;
    do {
        f.pair = PairSample{};
        f.pair.pair_id = "fixture";
        f.pair.source = random_points(rng, 3 + rng.index(8));
        f.pair.target = random_points(rng, 3 + rng.index(8));
        f.ab = random_transform(model, rng);
        f.ba = random_transform(model, rng);
    } while (smallest_residual(spec, f.ab, f.ba, f.pair.source, f.pair.target,
                               compute_assignments(spec, f.ab, f.ba, f.pair.source, f.pair.target)) <
             kGeneralPosition);
    return f;
}

/// Pair whose target is an exact similarity image of the source (all points
/// kept, in order) with the identity correspondence.
inline PairSample exact_pair(const PointSet &source, const AffineParams &truth) {
    PairSample s;
    s.pair_id = "exact";
    s.source = source;
    s.target = affine_warp(truth, source);
    CorrespondenceMap c;
    for (std::size_t i = 0; i < source.size(); ++i) c.pairs.push_back({i, i});
    s.correspondence = c;
    s.true_transform = Transform::affine(truth);
    return s;
}

} // namespace kpreg::testing

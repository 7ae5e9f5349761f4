#include "kpreg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kpreg/error.hpp"

namespace kpreg {

namespace {

void require_nonempty(std::span<const Point2D> pts, const char *what) {
    if (pts.empty()) {
        throw EmptySetError(std::string(what) + " point set is empty");
    }
}

// Accumulates scale * (r / |r|)^T d(point)/d(theta) into grad; returns |r|.
double accumulate_norm_gradient(Point2D r, std::span<const double> jx, std::span<const double> jy, double scale,
                                std::span<double> grad) {
    const double n = std::hypot(r.x, r.y);
    if (n > 0.0) {
        const double ux = scale * r.x / n;
        const double uy = scale * r.y / n;
        for (std::size_t k = 0; k < grad.size(); ++k) {
            grad[k] += ux * jx[k] + uy * jy[k];
        }
    }
    return n;
}

// (1/|src|) sum_i ||T(src_i) - ref[a_i]||
double nn_term(const Transform &t, std::span<const Point2D> src, std::span<const Point2D> ref, const Assignment &a,
               std::span<double> grad) {
    const std::size_t n = t.param_count();
    std::vector<double> jx(n), jy(n);
    const double scale = 1.0 / static_cast<double>(src.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        t.param_jacobian(src[i], jx, jy);
        sum += accumulate_norm_gradient(t.apply(src[i]) - ref[a.indices[i]], jx, jy, scale, grad);
    }
    return sum * scale;
}

// (1/|ref|) sum_j ||T(src[a_j]) - ref_j||, a_j the nearest warped source to ref_j
double reverse_term(const Transform &t, std::span<const Point2D> src, std::span<const Point2D> ref,
                    const Assignment &a, std::span<double> grad) {
    const std::size_t n = t.param_count();
    std::vector<double> jx(n), jy(n);
    const double scale = 1.0 / static_cast<double>(ref.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < ref.size(); ++j) {
        const Point2D &p = src[a.indices[j]];
        t.param_jacobian(p, jx, jy);
        sum += accumulate_norm_gradient(t.apply(p) - ref[j], jx, jy, scale, grad);
    }
    return sum * scale;
}

// (1/|src|) sum_i ||back(fwd(src_i)) - src_i||, differentiated w.r.t. both warps
double cycle_term(const Transform &fwd, const Transform &back, std::span<const Point2D> src,
                  std::span<double> grad_fwd, std::span<double> grad_back) {
    const std::size_t nf = fwd.param_count();
    const std::size_t nb = back.param_count();
    std::vector<double> fx(nf), fy(nf), cx(nf), cy(nf), bx(nb), by(nb);
    const double scale = 1.0 / static_cast<double>(src.size());
    double sum = 0.0;
    for (const auto &p : src) {
        const Point2D q = fwd.apply(p);
        const Point2D r = back.apply(q) - p;
        back.param_jacobian(q, bx, by);
        fwd.param_jacobian(p, fx, fy);
        const Mat2 jb = back.spatial_jacobian(q);
        for (std::size_t k = 0; k < nf; ++k) {
            cx[k] = jb.xx * fx[k] + jb.xy * fy[k];
            cy[k] = jb.yx * fx[k] + jb.yy * fy[k];
        }
        sum += accumulate_norm_gradient(r, bx, by, scale, grad_back);
        accumulate_norm_gradient(r, cx, cy, scale, grad_fwd);
    }
    return sum * scale;
}

// One direction of a family. `t` warps src onto ref; `other` warps back.
double directional_loss(LossFamily family, const Transform &t, const Transform &other, std::span<const Point2D> src,
                        std::span<const Point2D> ref, const std::optional<Assignment> &nn,
                        const std::optional<Assignment> &cd, std::span<double> grad_t, std::span<double> grad_other) {
    if (!nn) throw std::logic_error("missing nearest-neighbor assignment");
    double v = nn_term(t, src, ref, *nn, grad_t);
    if (family == LossFamily::cd || family == LossFamily::cd_cyc) {
        if (!cd) throw std::logic_error("missing chamfer assignment");
        v += reverse_term(t, src, ref, *cd, grad_t);
    }
    if (family == LossFamily::nn_cyc || family == LossFamily::cd_cyc) {
        v += cycle_term(t, other, src, grad_t, grad_other);
    }
    return v;
}

LossValue make_value(const Transform &ab, const Transform &ba) {
    LossValue lv;
    lv.grad_fwd.assign(ab.param_count(), 0.0);
    lv.grad_bwd.assign(ba.param_count(), 0.0);
    return lv;
}

} // namespace

Assignment nn_assign(std::span<const Point2D> queries, std::span<const Point2D> references) {
    require_nonempty(queries, "query");
    require_nonempty(references, "reference");
    Assignment a;
    a.indices.resize(queries.size());
    a.distances.resize(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < references.size(); ++j) {
            const double dx = queries[i].x - references[j].x;
            const double dy = queries[i].y - references[j].y;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = j;
            }
        }
        a.indices[i] = best;
        a.distances[i] = distance(queries[i], references[best]);
    }
    return a;
}

void CorrespondenceMap::validate(std::size_t n_source, std::size_t n_target) const {
    std::vector<bool> seen(n_source, false);
    for (const auto &[s, t] : pairs) {
        if (s >= n_source || t >= n_target) {
            throw ValidationError("correspondence (" + std::to_string(s) + ", " + std::to_string(t) +
                                  ") is out of range");
        }
        if (seen[s]) {
            throw ValidationError("source index " + std::to_string(s) + " has more than one correspondence");
        }
        seen[s] = true;
    }
}

std::string to_string(LossFamily f) {
    switch (f) {
    case LossFamily::nn: return "nn";
    case LossFamily::cd: return "cd";
    case LossFamily::nn_cyc: return "nn-cyc";
    case LossFamily::cd_cyc: return "cd-cyc";
    }
    return "?";
}

std::string to_string(Direction d) {
    switch (d) {
    case Direction::forward: return "forward";
    case Direction::backward: return "backward";
    case Direction::symmetric: return "symmetric";
    }
    return "?";
}

LossFamily parse_loss_family(const std::string &s) {
    if (s == "nn") return LossFamily::nn;
    if (s == "cd") return LossFamily::cd;
    if (s == "nn-cyc") return LossFamily::nn_cyc;
    if (s == "cd-cyc") return LossFamily::cd_cyc;
    throw ConfigInvalidError("unknown loss '" + s + "'");
}

Direction parse_direction(const std::string &s) {
    if (s == "forward") return Direction::forward;
    if (s == "backward") return Direction::backward;
    if (s == "symmetric") return Direction::symmetric;
    throw ConfigInvalidError("unknown direction '" + s + "'");
}

LossAssignments compute_assignments(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                                    std::span<const Point2D> pa, std::span<const Point2D> pb) {
    require_nonempty(pa, "source");
    require_nonempty(pb, "target");
    LossAssignments a;
    if (spec.has_forward()) {
        const PointSet warped = theta_ab.apply(pa);
        a.forward_nn = nn_assign(warped, pb);
        if (spec.chamfer()) a.forward_cd = nn_assign(pb, warped);
    }
    if (spec.has_backward()) {
        const PointSet warped = theta_ba.apply(pb);
        a.backward_nn = nn_assign(warped, pa);
        if (spec.chamfer()) a.backward_cd = nn_assign(pa, warped);
    }
    return a;
}

LossValue evaluate_loss(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                        std::span<const Point2D> pa, std::span<const Point2D> pb, const LossAssignments &assign) {
    require_nonempty(pa, "source");
    require_nonempty(pb, "target");
    LossValue lv = make_value(theta_ab, theta_ba);
    if (spec.has_forward()) {
        lv.value += directional_loss(spec.family, theta_ab, theta_ba, pa, pb, assign.forward_nn, assign.forward_cd,
                                     lv.grad_fwd, lv.grad_bwd);
    }
    if (spec.has_backward()) {
        lv.value += directional_loss(spec.family, theta_ba, theta_ab, pb, pa, assign.backward_nn,
                                     assign.backward_cd, lv.grad_bwd, lv.grad_fwd);
    }
    return lv;
}

double smallest_residual(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                         std::span<const Point2D> pa, std::span<const Point2D> pb, const LossAssignments &assign) {
    double least = std::numeric_limits<double>::infinity();
    auto side = [&](const Transform &t, const Transform &other, std::span<const Point2D> src,
                    std::span<const Point2D> ref, const std::optional<Assignment> &nn,
                    const std::optional<Assignment> &cd) {
        for (std::size_t i = 0; i < src.size(); ++i) {
            const Point2D q = t.apply(src[i]);
            if (nn) least = std::min(least, distance(q, ref[nn->indices[i]]));
            if (spec.cyclic()) least = std::min(least, distance(other.apply(q), src[i]));
        }
        if (cd) {
            for (std::size_t j = 0; j < ref.size(); ++j) least = std::min(least, distance(t.apply(src[cd->indices[j]]), ref[j]));
        }
    };
    if (spec.has_forward()) side(theta_ab, theta_ba, pa, pb, assign.forward_nn, assign.forward_cd);
    if (spec.has_backward()) side(theta_ba, theta_ab, pb, pa, assign.backward_nn, assign.backward_cd);
    return least;
}

LossValue evaluate_loss(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                        std::span<const Point2D> pa, std::span<const Point2D> pb) {
    return evaluate_loss(spec, theta_ab, theta_ba, pa, pb, compute_assignments(spec, theta_ab, theta_ba, pa, pb));
}

LossValue loss_nn_forward(const Transform &theta_ab, std::span<const Point2D> pa, std::span<const Point2D> pb) {
    LossValue lv = evaluate_loss({LossFamily::nn, Direction::forward}, theta_ab, Transform::identity(), pa, pb);
    lv.grad_bwd.clear();
    return lv;
}

LossValue loss_cd_forward(const Transform &theta_ab, std::span<const Point2D> pa, std::span<const Point2D> pb) {
    LossValue lv = evaluate_loss({LossFamily::cd, Direction::forward}, theta_ab, Transform::identity(), pa, pb);
    lv.grad_bwd.clear();
    return lv;
}

LossValue loss_nn_cyc_forward(const Transform &theta_ab, const Transform &theta_ba, std::span<const Point2D> pa,
                              std::span<const Point2D> pb) {
    return evaluate_loss({LossFamily::nn_cyc, Direction::forward}, theta_ab, theta_ba, pa, pb);
}

LossValue loss_nn_backward(const Transform &theta_ba, std::span<const Point2D> pa, std::span<const Point2D> pb) {
    LossValue lv = evaluate_loss({LossFamily::nn, Direction::backward}, Transform::identity(), theta_ba, pa, pb);
    lv.grad_fwd.clear();
    return lv;
}

LossValue loss_cd_backward(const Transform &theta_ba, std::span<const Point2D> pa, std::span<const Point2D> pb) {
    LossValue lv = evaluate_loss({LossFamily::cd, Direction::backward}, Transform::identity(), theta_ba, pa, pb);
    lv.grad_fwd.clear();
    return lv;
}

LossValue loss_nn_cyc_backward(const Transform &theta_ba, const Transform &theta_ab, std::span<const Point2D> pa,
                               std::span<const Point2D> pb) {
    return evaluate_loss({LossFamily::nn_cyc, Direction::backward}, theta_ab, theta_ba, pa, pb);
}

LossValue loss_symmetric(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                         std::span<const Point2D> pa, std::span<const Point2D> pb) {
    return evaluate_loss({spec.family, Direction::symmetric}, theta_ab, theta_ba, pa, pb);
}

double cycle_residual(const Transform &fwd, const Transform &back, std::span<const Point2D> pts) {
    require_nonempty(pts, "cycle");
    double sum = 0.0;
    for (const auto &p : pts) sum += distance(back.apply(fwd.apply(p)), p);
    return sum / static_cast<double>(pts.size());
}

LossValue loss_supervised(const Transform &theta_ab, std::span<const Point2D> pa, std::span<const Point2D> pb,
                          const CorrespondenceMap &c) {
    if (c.empty()) throw EmptyCorrespondenceError("supervised loss needs at least one correspondence");
    c.validate(pa.size(), pb.size());
    LossValue lv;
    lv.grad_fwd.assign(theta_ab.param_count(), 0.0);
    const std::size_t n = theta_ab.param_count();
    std::vector<double> jx(n), jy(n);
    const double scale = 1.0 / static_cast<double>(c.size());
    double sum = 0.0;
    for (const auto &[s, t] : c.pairs) {
        theta_ab.param_jacobian(pa[s], jx, jy);
        sum += accumulate_norm_gradient(theta_ab.apply(pa[s]) - pb[t], jx, jy, scale, lv.grad_fwd);
    }
    lv.value = sum * scale;
    return lv;
}

LossValue loss_grid(const Transform &theta_hat, const Transform &theta_true, std::span<const Point2D> grid) {
    require_nonempty(grid, "grid");
    LossValue lv;
    lv.grad_fwd.assign(theta_hat.param_count(), 0.0);
    const std::size_t n = theta_hat.param_count();
    std::vector<double> jx(n), jy(n);
    const double scale = 1.0 / static_cast<double>(grid.size());
    double sum = 0.0;
    for (const auto &g : grid) {
        theta_hat.param_jacobian(g, jx, jy);
        sum += accumulate_norm_gradient(theta_hat.apply(g) - theta_true.apply(g), jx, jy, scale, lv.grad_fwd);
    }
    lv.value = sum * scale;
    return lv;
}

PointSet uniform_grid(std::size_t n) {
    PointSet g;
    if (n == 0) return g;
    g.reserve(n * n);
    const double step = n > 1 ? 1.0 / static_cast<double>(n - 1) : 0.0;
    for (std::size_t iy = 0; iy < n; ++iy) {
        for (std::size_t ix = 0; ix < n; ++ix) {
            g.push_back({step * static_cast<double>(ix), step * static_cast<double>(iy)});
        }
    }
    return g;
}

} // namespace kpreg

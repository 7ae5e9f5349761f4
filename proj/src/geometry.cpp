#include "kpreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "kpreg/error.hpp"

namespace kpreg {

double distance(Point2D a, Point2D b) { return std::hypot(a.x - b.x, a.y - b.y); }

AffineParams AffineParams::similarity(double radians, double scale, Point2D center, Point2D shift) {
    const double c = scale * std::cos(radians);
    const double s = scale * std::sin(radians);
    // p' = R s (p - center) + center + shift
    AffineParams a{c, -s, 0.0, s, c, 0.0};
    a.tx = center.x - (c * center.x - s * center.y) + shift.x;
    a.ty = center.y - (s * center.x + c * center.y) + shift.y;
    return a;
}

AffineParams AffineParams::from_array(std::span<const double> v) {
    if (v.size() != kAffineParamCount) {
        throw LengthMismatchError("affine parameters need 6 values, got " + std::to_string(v.size()));
    }
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

TpsParams TpsParams::uniform(Point2D shift, double regularization) {
    TpsParams p;
    for (std::size_t k = 0; k < kTpsControlCount; ++k) {
        p.displacements[2 * k] = shift.x;
        p.displacements[2 * k + 1] = shift.y;
    }
    p.regularization = regularization;
    return p;
}

const std::array<Point2D, kTpsControlCount> &tps_control_grid() {
    static const std::array<Point2D, kTpsControlCount> grid = [] {
        std::array<Point2D, kTpsControlCount> g{};
        for (std::size_t k = 0; k < kTpsControlCount; ++k) {
            g[k] = {0.5 * static_cast<double>(k % 3), 0.5 * static_cast<double>(k / 3)};
        }
        return g;
    }();
    return grid;
}

double tps_kernel(double r_squared) { return r_squared > 0.0 ? r_squared * std::log(r_squared) : 0.0; }

TpsBasis::TpsBasis(double regularization) : lambda_(regularization) {
    if (!(regularization >= 0.0) || !std::isfinite(regularization)) {
        throw ConfigInvalidError("TPS regularization must be finite and nonnegative");
    }
    constexpr int n = static_cast<int>(kTpsControlCount);
    const auto &grid = tps_control_grid();

    // [K + lambda I   P] [w]   [v]
    // [P^T            0] [a] = [0]
    Eigen::Matrix<double, n + 3, n + 3> system = Eigen::Matrix<double, n + 3, n + 3>::Zero();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double dx = grid[i].x - grid[j].x;
            const double dy = grid[i].y - grid[j].y;
            system(i, j) = tps_kernel(dx * dx + dy * dy);
        }
        system(i, i) += regularization;
        system(i, n) = system(n, i) = 1.0;
        system(i, n + 1) = system(n + 1, i) = grid[i].x;
        system(i, n + 2) = system(n + 2, i) = grid[i].y;
    }

    const Eigen::FullPivLU<Eigen::Matrix<double, n + 3, n + 3>> lu(system);
    if (!lu.isInvertible() || lu.rcond() < 1e-12) {
        throw SingularSystemError("TPS system matrix is numerically singular");
    }
    const Eigen::Matrix<double, n + 3, n + 3> inv = lu.inverse();
    for (int r = 0; r < n + 3; ++r) {
        for (int c = 0; c < n; ++c) {
            inverse_[r][c] = inv(r, c);
        }
    }
}

std::array<double, kTpsControlCount> TpsBasis::weights(Point2D p) const {
    const auto &grid = tps_control_grid();
    std::array<double, kTpsControlCount + 3> basis{};
    for (std::size_t j = 0; j < kTpsControlCount; ++j) {
        const double dx = p.x - grid[j].x;
        const double dy = p.y - grid[j].y;
        basis[j] = tps_kernel(dx * dx + dy * dy);
    }
    basis[kTpsControlCount] = 1.0;
    basis[kTpsControlCount + 1] = p.x;
    basis[kTpsControlCount + 2] = p.y;

    std::array<double, kTpsControlCount> w{};
    for (std::size_t j = 0; j < basis.size(); ++j) {
        for (std::size_t k = 0; k < kTpsControlCount; ++k) {
            w[k] += basis[j] * inverse_[j][k];
        }
    }
    return w;
}

void TpsBasis::weight_gradients(Point2D p, std::array<double, kTpsControlCount> &dwdx,
                                std::array<double, kTpsControlCount> &dwdy) const {
    const auto &grid = tps_control_grid();
    dwdx.fill(0.0);
    dwdy.fill(0.0);
    for (std::size_t j = 0; j < kTpsControlCount; ++j) {
        const double dx = p.x - grid[j].x;
        const double dy = p.y - grid[j].y;
        const double s = dx * dx + dy * dy;
        if (s <= 0.0) {
            continue; // grad U vanishes at the control point
        }
        // d/dp [s log s] = (log s + 1) * 2 (p - c)
        const double g = 2.0 * (std::log(s) + 1.0);
        for (std::size_t k = 0; k < kTpsControlCount; ++k) {
            dwdx[k] += g * dx * inverse_[j][k];
            dwdy[k] += g * dy * inverse_[j][k];
        }
    }
    for (std::size_t k = 0; k < kTpsControlCount; ++k) {
        dwdx[k] += inverse_[kTpsControlCount + 1][k];
        dwdy[k] += inverse_[kTpsControlCount + 2][k];
    }
}

std::shared_ptr<const TpsBasis> TpsBasis::interpolating() {
    static const auto basis = std::make_shared<const TpsBasis>(0.0);
    return basis;
}

Transform Transform::tps(const TpsParams &p) {
    auto basis = p.regularization == 0.0 ? TpsBasis::interpolating() : std::make_shared<const TpsBasis>(p.regularization);
    return Transform(Rep{TpsModel{p, std::move(basis)}});
}

Transform::Kind Transform::kind() const {
    switch (rep_.index()) {
    case 0: return Kind::affine;
    case 1: return Kind::tps;
    default: return Kind::composed;
    }
}

int Transform::depth() const {
    if (const auto *c = std::get_if<Composed>(&rep_)) {
        return 1 + std::max(c->outer->depth(), c->inner->depth());
    }
    return 0;
}

std::size_t Transform::param_count() const {
    switch (kind()) {
    case Kind::affine: return kAffineParamCount;
    case Kind::tps: return kTpsParamCount;
    case Kind::composed: return outer().param_count() + inner().param_count();
    }
    return 0;
}

std::vector<double> Transform::params() const {
    switch (kind()) {
    case Kind::affine: {
        const auto a = affine_params().to_array();
        return {a.begin(), a.end()};
    }
    case Kind::tps: {
        const auto &d = tps_params().displacements;
        return {d.begin(), d.end()};
    }
    case Kind::composed: {
        auto v = outer().params();
        const auto w = inner().params();
        v.insert(v.end(), w.begin(), w.end());
        return v;
    }
    }
    return {};
}

Transform Transform::with_params(std::span<const double> params) const {
    if (params.size() != param_count()) {
        throw LengthMismatchError("expected " + std::to_string(param_count()) + " parameters, got " +
                                  std::to_string(params.size()));
    }
    switch (kind()) {
    case Kind::affine: return affine(AffineParams::from_array(params));
    case Kind::tps: {
        TpsModel m = std::get<TpsModel>(rep_);
        std::copy(params.begin(), params.end(), m.params.displacements.begin());
        return Transform(Rep{std::move(m)});
    }
    case Kind::composed: {
        const std::size_t n_outer = outer().param_count();
        return Transform(Rep{Composed{std::make_shared<const Transform>(outer().with_params(params.first(n_outer))),
                                      std::make_shared<const Transform>(inner().with_params(params.subspan(n_outer)))}});
    }
    }
    return *this;
}

const AffineParams &Transform::affine_params() const {
    if (const auto *a = std::get_if<AffineParams>(&rep_)) return *a;
    throw std::logic_error("transform is not affine");
}

const TpsParams &Transform::tps_params() const {
    if (const auto *t = std::get_if<TpsModel>(&rep_)) return t->params;
    throw std::logic_error("transform is not a TPS");
}

const Transform &Transform::outer() const {
    if (const auto *c = std::get_if<Composed>(&rep_)) return *c->outer;
    throw std::logic_error("transform is not a composition");
}

const Transform &Transform::inner() const {
    if (const auto *c = std::get_if<Composed>(&rep_)) return *c->inner;
    throw std::logic_error("transform is not a composition");
}

Point2D Transform::apply(Point2D p) const {
    switch (kind()) {
    case Kind::affine: return std::get<AffineParams>(rep_).apply(p);
    case Kind::tps: {
        const auto &m = std::get<TpsModel>(rep_);
        const auto w = m.basis->weights(p);
        Point2D out = p;
        for (std::size_t k = 0; k < kTpsControlCount; ++k) {
            out.x += w[k] * m.params.displacements[2 * k];
            out.y += w[k] * m.params.displacements[2 * k + 1];
        }
        return out;
    }
    case Kind::composed: return outer().apply(inner().apply(p));
    }
    return p;
}

PointSet Transform::apply(std::span<const Point2D> pts) const {
    PointSet out;
    out.reserve(pts.size());
    for (const auto &p : pts) out.push_back(apply(p));
    return out;
}

Mat2 Transform::spatial_jacobian(Point2D p) const {
    switch (kind()) {
    case Kind::affine: {
        const auto &a = std::get<AffineParams>(rep_);
        return {a.a11, a.a12, a.a21, a.a22};
    }
    case Kind::tps: {
        const auto &m = std::get<TpsModel>(rep_);
        std::array<double, kTpsControlCount> dwdx{}, dwdy{};
        m.basis->weight_gradients(p, dwdx, dwdy);
        Mat2 j;
        for (std::size_t k = 0; k < kTpsControlCount; ++k) {
            const Point2D d = m.params.displacement(k);
            j.xx += d.x * dwdx[k];
            j.xy += d.x * dwdy[k];
            j.yx += d.y * dwdx[k];
            j.yy += d.y * dwdy[k];
        }
        return j;
    }
    case Kind::composed: return outer().spatial_jacobian(inner().apply(p)) * inner().spatial_jacobian(p);
    }
    return {};
}

void Transform::param_jacobian(Point2D p, std::span<double> d_out_x, std::span<double> d_out_y) const {
    const std::size_t n = param_count();
    if (d_out_x.size() != n || d_out_y.size() != n) {
        throw LengthMismatchError("jacobian rows must have " + std::to_string(n) + " entries");
    }
    switch (kind()) {
    case Kind::affine:
        d_out_x[0] = p.x, d_out_x[1] = p.y, d_out_x[2] = 1.0;
        d_out_x[3] = d_out_x[4] = d_out_x[5] = 0.0;
        d_out_y[0] = d_out_y[1] = d_out_y[2] = 0.0;
        d_out_y[3] = p.x, d_out_y[4] = p.y, d_out_y[5] = 1.0;
        return;
    case Kind::tps: {
        const auto w = std::get<TpsModel>(rep_).basis->weights(p);
        for (std::size_t k = 0; k < kTpsControlCount; ++k) {
            d_out_x[2 * k] = w[k];
            d_out_x[2 * k + 1] = 0.0;
            d_out_y[2 * k] = 0.0;
            d_out_y[2 * k + 1] = w[k];
        }
        return;
    }
    case Kind::composed: {
        const Transform &o = outer();
        const Transform &i = inner();
        const std::size_t n_outer = o.param_count();
        const Point2D q = i.apply(p);
        o.param_jacobian(q, d_out_x.first(n_outer), d_out_y.first(n_outer));

        // chain rule through the outer warp for the inner parameters
        const std::size_t n_inner = i.param_count();
        std::vector<double> ix(n_inner), iy(n_inner);
        i.param_jacobian(p, ix, iy);
        const Mat2 jo = o.spatial_jacobian(q);
        for (std::size_t k = 0; k < n_inner; ++k) {
            d_out_x[n_outer + k] = jo.xx * ix[k] + jo.xy * iy[k];
            d_out_y[n_outer + k] = jo.yx * ix[k] + jo.yy * iy[k];
        }
        return;
    }
    }
}

Transform compose(const Transform &outer, const Transform &inner) {
    const int depth = 1 + std::max(outer.depth(), inner.depth());
    if (depth > Transform::kMaxDepth) {
        throw NestingTooDeepError("composition depth " + std::to_string(depth) + " exceeds " +
                                  std::to_string(Transform::kMaxDepth));
    }
    return Transform(Transform::Rep{Transform::Composed{std::make_shared<const Transform>(outer),
                                                        std::make_shared<const Transform>(inner)}});
}

PointSet affine_warp(const AffineParams &params, std::span<const Point2D> pts) {
    PointSet out;
    out.reserve(pts.size());
    for (const auto &p : pts) out.push_back(params.apply(p));
    return out;
}

PointSet tps_warp(const TpsParams &params, std::span<const Point2D> pts) { return Transform::tps(params).apply(pts); }

PointSet warp(const Transform &t, std::span<const Point2D> pts) { return t.apply(pts); }

AffineParams invert_affine(const AffineParams &a) {
    const double det = a.determinant();
    if (!(std::abs(det) > 1e-12)) {
        throw NonInvertibleError("affine determinant " + std::to_string(det) + " is too close to zero");
    }
    AffineParams inv;
    inv.a11 = a.a22 / det;
    inv.a12 = -a.a12 / det;
    inv.a21 = -a.a21 / det;
    inv.a22 = a.a11 / det;
    inv.tx = -(inv.a11 * a.tx + inv.a12 * a.ty);
    inv.ty = -(inv.a21 * a.tx + inv.a22 * a.ty);
    return inv;
}

Jacobian warp_jacobian(const Transform &t, std::span<const Point2D> pts) {
    Jacobian j(pts.size(), t.param_count());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        t.param_jacobian(pts[i], j.row(i, 0), j.row(i, 1));
    }
    return j;
}

} // namespace kpreg

#pragma once

// Affine and thin-plate-spline warps of normalized 2D keypoints.
//
// Coordinates are normalized image coordinates (nominally [0,1]^2, but warped
// points are allowed to leave the unit square). Every transform can be
// evaluated, differentiated with respect to its input point and with respect
// to its parameter vector, which is what the loss gradients are built from.

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace kpreg {

struct Point2D {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2D &, const Point2D &) = default;
};

using PointSet = std::vector<Point2D>;

inline Point2D operator+(Point2D a, Point2D b) { return {a.x + b.x, a.y + b.y}; }
inline Point2D operator-(Point2D a, Point2D b) { return {a.x - b.x, a.y - b.y}; }
double distance(Point2D a, Point2D b);

inline constexpr std::size_t kAffineParamCount = 6;
inline constexpr std::size_t kTpsControlCount = 9;
inline constexpr std::size_t kTpsParamCount = 2 * kTpsControlCount;

/// (x, y) -> (a11 x + a12 y + tx, a21 x + a22 y + ty). Parameter order matches
/// the field order.
struct AffineParams {
    double a11 = 1.0, a12 = 0.0, tx = 0.0;
    double a21 = 0.0, a22 = 1.0, ty = 0.0;

    static AffineParams identity() { return {}; }
    static AffineParams translation(double dx, double dy) { return {1.0, 0.0, dx, 0.0, 1.0, dy}; }
    /// Rotation by `radians` and isotropic `scale` about `center`, then a shift.
    static AffineParams similarity(double radians, double scale, Point2D center, Point2D shift);

    std::array<double, kAffineParamCount> to_array() const { return {a11, a12, tx, a21, a22, ty}; }
    static AffineParams from_array(std::span<const double> v);

    double determinant() const { return a11 * a22 - a12 * a21; }
    Point2D apply(Point2D p) const { return {a11 * p.x + a12 * p.y + tx, a21 * p.x + a22 * p.y + ty}; }

    friend bool operator==(const AffineParams &, const AffineParams &) = default;
};

/// Thin-plate spline on a fixed 3x3 lattice of control points at {0, 0.5, 1}^2.
///
/// Control point k sits at (0.5 * (k % 3), 0.5 * (k / 3)). The 18 parameters are
/// the displacements (dx_k, dy_k) stored interleaved; control point k is mapped
/// to its position plus (dx_k, dy_k). All-zero displacements give the identity.
struct TpsParams {
    std::array<double, kTpsParamCount> displacements{};
    double regularization = 0.0; ///< lambda added to the kernel diagonal, >= 0

    Point2D displacement(std::size_t k) const { return {displacements[2 * k], displacements[2 * k + 1]}; }
    static TpsParams uniform(Point2D shift, double regularization = 0.0);

    friend bool operator==(const TpsParams &, const TpsParams &) = default;
};

const std::array<Point2D, kTpsControlCount> &tps_control_grid();

/// U(r) = r^2 log r^2 written in terms of r^2, with U(0) = 0.
double tps_kernel(double r_squared);

/// Factorized TPS system for one regularization value. The interpolant is
/// linear in the displacements: warp(p) = p + sum_k w_k(p) * d_k.
class TpsBasis {
public:
    explicit TpsBasis(double regularization); // throws SingularSystemError

    double regularization() const { return lambda_; }
    /// w_k(p) for every control point.
    std::array<double, kTpsControlCount> weights(Point2D p) const;
    /// dw_k/dx and dw_k/dy.
    void weight_gradients(Point2D p, std::array<double, kTpsControlCount> &dwdx,
                          std::array<double, kTpsControlCount> &dwdy) const;

    /// Shared instance for lambda = 0.
    static std::shared_ptr<const TpsBasis> interpolating();

private:
    double lambda_;
    // Rows 0..11 of the inverse system matrix, columns 0..8 (the right-hand side
    // is zero in the three affine rows).
    std::array<std::array<double, kTpsControlCount>, kTpsControlCount + 3> inverse_{};
};

/// d(output)/d(input) of a warp at one point.
struct Mat2 {
    double xx = 1.0, xy = 0.0; // d out_x / d x, d out_x / d y
    double yx = 0.0, yy = 1.0; // d out_y / d x, d out_y / d y

    Mat2 operator*(const Mat2 &r) const {
        return {xx * r.xx + xy * r.yx, xx * r.xy + xy * r.yy, yx * r.xx + yy * r.yx, yx * r.xy + yy * r.yy};
    }
};

/// Derivatives of warped coordinates with respect to transform parameters,
/// laid out as [point][coordinate][parameter].
class Jacobian {
public:
    Jacobian(std::size_t points, std::size_t params) : points_(points), params_(params), data_(points * 2 * params, 0.0) {}

    std::size_t points() const { return points_; }
    std::size_t params() const { return params_; }
    double operator()(std::size_t point, int coord, std::size_t param) const {
        return data_[(point * 2 + coord) * params_ + param];
    }
    std::span<double> row(std::size_t point, int coord) {
        return {data_.data() + (point * 2 + coord) * params_, params_};
    }
    std::span<const double> row(std::size_t point, int coord) const {
        return {data_.data() + (point * 2 + coord) * params_, params_};
    }

private:
    std::size_t points_;
    std::size_t params_;
    std::vector<double> data_;
};

/// Immutable warp: affine, TPS, or an outer(inner(p)) composition.
///
/// The parameter vector of a composition is the outer parameters followed by
/// the inner parameters.
class Transform {
public:
    enum class Kind { affine, tps, composed };
    static constexpr int kMaxDepth = 2;

    Transform() : rep_(AffineParams{}) {}
    static Transform affine(const AffineParams &p) { return Transform(Rep{p}); }
    static Transform tps(const TpsParams &p);
    static Transform identity() { return Transform(); }

    Kind kind() const;
    /// 0 for affine/TPS; 1 + the deeper child for compositions.
    int depth() const;
    std::size_t param_count() const;
    std::vector<double> params() const;
    /// Same structure, new parameters. Throws LengthMismatchError.
    Transform with_params(std::span<const double> params) const;

    const AffineParams &affine_params() const;
    const TpsParams &tps_params() const;
    const Transform &outer() const;
    const Transform &inner() const;

    Point2D apply(Point2D p) const;
    PointSet apply(std::span<const Point2D> pts) const;
    Mat2 spatial_jacobian(Point2D p) const;
    /// Writes d out_x / d theta and d out_y / d theta (each param_count() long).
    void param_jacobian(Point2D p, std::span<double> d_out_x, std::span<double> d_out_y) const;

    friend Transform compose(const Transform &outer, const Transform &inner);

private:
    struct TpsModel {
        TpsParams params;
        std::shared_ptr<const TpsBasis> basis;
    };
    struct Composed {
        std::shared_ptr<const Transform> outer;
        std::shared_ptr<const Transform> inner;
    };
    using Rep = std::variant<AffineParams, TpsModel, Composed>;

    explicit Transform(Rep rep) : rep_(std::move(rep)) {}

    Rep rep_;
};

PointSet affine_warp(const AffineParams &params, std::span<const Point2D> pts);
/// Throws SingularSystemError if the TPS system cannot be factorized.
PointSet tps_warp(const TpsParams &params, std::span<const Point2D> pts);
PointSet warp(const Transform &t, std::span<const Point2D> pts);

/// outer(inner(p)). Throws NestingTooDeepError past Transform::kMaxDepth.
Transform compose(const Transform &outer, const Transform &inner);

/// Throws NonInvertibleError when |det| <= 1e-12.
AffineParams invert_affine(const AffineParams &params);

Jacobian warp_jacobian(const Transform &t, std::span<const Point2D> pts);

} // namespace kpreg

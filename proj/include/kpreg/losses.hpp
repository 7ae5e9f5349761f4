#pragma once

// Correspondence-free alignment losses between two keypoint sets.
//
// Naming: pa are the source keypoints (M of them), pb the target keypoints
// (N of them). theta_ab warps source into target space, theta_ba warps target
// into source space. Gradients are taken with the nearest-neighbor
// assignments held fixed, which is the ICP-style subgradient of each loss.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kpreg/geometry.hpp"

namespace kpreg {

struct Assignment {
    std::vector<std::size_t> indices; ///< nearest reference for each query
    std::vector<double> distances;    ///< Euclidean distance to it
};

/// Brute-force nearest neighbors; ties go to the lowest reference index.
/// Throws EmptySetError.
Assignment nn_assign(std::span<const Point2D> queries, std::span<const Point2D> references);

/// Ground-truth (source index, target index) pairs, at most one per source.
struct CorrespondenceMap {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;

    bool empty() const { return pairs.empty(); }
    std::size_t size() const { return pairs.size(); }
    /// Throws ValidationError if an index is out of range or a source repeats.
    void validate(std::size_t n_source, std::size_t n_target) const;
};

enum class LossFamily { nn, cd, nn_cyc, cd_cyc };
enum class Direction { forward, backward, symmetric };

struct LossSpec {
    LossFamily family = LossFamily::nn;
    Direction direction = Direction::symmetric;

    bool cyclic() const { return family == LossFamily::nn_cyc || family == LossFamily::cd_cyc; }
    bool chamfer() const { return family == LossFamily::cd || family == LossFamily::cd_cyc; }
    bool has_forward() const { return direction != Direction::backward; }
    bool has_backward() const { return direction != Direction::forward; }
};

std::string to_string(LossFamily f);
std::string to_string(Direction d);
LossFamily parse_loss_family(const std::string &s); ///< "nn", "cd", "nn-cyc", "cd-cyc"
Direction parse_direction(const std::string &s);    ///< "forward", "backward", "symmetric"

struct LossValue {
    double value = 0.0;
    std::vector<double> grad_fwd; ///< d value / d theta_ab
    std::vector<double> grad_bwd; ///< d value / d theta_ba (zeros when unused)
};

/// The nearest-neighbor assignments a loss evaluation depends on. Freezing
/// these turns each loss into a smooth function of the parameters.
struct LossAssignments {
    std::optional<Assignment> forward_nn;  ///< theta_ab(pa) -> pb
    std::optional<Assignment> forward_cd;  ///< pb -> theta_ab(pa)
    std::optional<Assignment> backward_nn; ///< theta_ba(pb) -> pa
    std::optional<Assignment> backward_cd; ///< pa -> theta_ba(pb)
};

LossAssignments compute_assignments(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                                    std::span<const Point2D> pa, std::span<const Point2D> pb);

/// Loss value and gradients under the given (frozen) assignments.
LossValue evaluate_loss(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                        std::span<const Point2D> pa, std::span<const Point2D> pb, const LossAssignments &assign);

/// Smallest residual norm entering any distance term of the loss. The losses
/// are not differentiable where a residual vanishes, so finite-difference
/// checks need this bounded away from zero.
double smallest_residual(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                         std::span<const Point2D> pa, std::span<const Point2D> pb, const LossAssignments &assign);

/// Loss value and gradients with assignments recomputed from the current warps.
LossValue evaluate_loss(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                        std::span<const Point2D> pa, std::span<const Point2D> pb);

// Forward losses: measured on the source points.
LossValue loss_nn_forward(const Transform &theta_ab, std::span<const Point2D> pa, std::span<const Point2D> pb);
LossValue loss_cd_forward(const Transform &theta_ab, std::span<const Point2D> pa, std::span<const Point2D> pb);
LossValue loss_nn_cyc_forward(const Transform &theta_ab, const Transform &theta_ba, std::span<const Point2D> pa,
                              std::span<const Point2D> pb);

// Backward losses: the mirror images, measured on the target points.
LossValue loss_nn_backward(const Transform &theta_ba, std::span<const Point2D> pa, std::span<const Point2D> pb);
LossValue loss_cd_backward(const Transform &theta_ba, std::span<const Point2D> pa, std::span<const Point2D> pb);
LossValue loss_nn_cyc_backward(const Transform &theta_ba, const Transform &theta_ab, std::span<const Point2D> pa,
                               std::span<const Point2D> pb);

/// Forward plus backward variant of spec.family (spec.direction is ignored).
LossValue loss_symmetric(const LossSpec &spec, const Transform &theta_ab, const Transform &theta_ba,
                         std::span<const Point2D> pa, std::span<const Point2D> pb);

/// The re-projection residual (1/M) sum ||back(fwd(p)) - p|| on its own.
double cycle_residual(const Transform &fwd, const Transform &back, std::span<const Point2D> pts);

/// Mean distance between warped sources and their true correspondents.
/// Throws EmptyCorrespondenceError.
LossValue loss_supervised(const Transform &theta_ab, std::span<const Point2D> pa, std::span<const Point2D> pb,
                          const CorrespondenceMap &c);

/// Mean distance between a grid warped by the estimate and by the truth.
LossValue loss_grid(const Transform &theta_hat, const Transform &theta_true, std::span<const Point2D> grid);

/// n x n grid spanning [0,1]^2.
PointSet uniform_grid(std::size_t n);

} // namespace kpreg

#pragma once

#include <optional>
#include <string>

#include "kpreg/geometry.hpp"
#include "kpreg/losses.hpp"

namespace kpreg {

struct ImageSize {
    double width = 1.0;
    double height = 1.0;

    friend bool operator==(const ImageSize &, const ImageSize &) = default;
};

/// One source/target keypoint-set pair. Keypoints are normalized per axis by
/// their own image size.
struct PairSample {
    std::string pair_id;
    std::string source_id; ///< image identifiers, used to detect flipped duplicates
    std::string target_id;
    PointSet source;
    PointSet target;
    std::optional<std::string> category;
    std::optional<CorrespondenceMap> correspondence; ///< ground truth, evaluation only
    ImageSize source_size;
    ImageSize target_size;
    std::optional<Transform> true_transform; ///< set by the synthetic generator
};

} // namespace kpreg

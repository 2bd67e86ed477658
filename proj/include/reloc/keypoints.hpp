#pragma once

#include "reloc/geometry.hpp"
#include "reloc/image.hpp"

#include <filesystem>
#include <vector>

namespace reloc {

struct Keypoint {
    Pixel2 pixel;  // cell center (col, row)
    double confidence = 0.0;
};

struct Correspondence {
    Pixel2 pixel;
    Point3 world;
    double confidence = 1.0;
};

struct NmsParams {
    int radius = 4;
    double threshold = 0.7;
    int max_count = 600;
};

/// Local maxima of a heatmap over (2r+1)^2 Chebyshev windows.
///
/// A cell survives when its value is >= threshold and it beats every other
/// cell of its window; equal values are won by the smaller (row, col). The
/// result is sorted by decreasing confidence (ties in (row, col) order) and
/// truncated to max_count.
std::vector<Keypoint> nms_select(const Heatmap& h, int radius, double threshold, int max_count);
inline std::vector<Keypoint> nms_select(const Heatmap& h, const NmsParams& p) {
    return nms_select(h, p.radius, p.threshold, p.max_count);
}

/// Pairs each keypoint with the coordinate at its cell. Throws OutOfBounds.
std::vector<Correspondence> gather_correspondences(const std::vector<Keypoint>& kps, const CoordMap& coords);

struct ConfidenceSplit {
    std::vector<Correspondence> high;
    std::vector<Correspondence> low;
};

/// Two disjoint sets of `count` correspondences: the strongest NMS keypoints
/// with confidence >= hi_thresh, and local maxima whose confidence lies in
/// [lo_score - 0.05, lo_score + 0.05], closest to lo_score first.
/// Throws InsufficientKeypoints("hi" | "lo", found).
ConfidenceSplit split_by_confidence(const Heatmap& h, const CoordMap& coords, double hi_thresh, double lo_score,
                                    int count, int radius = 4);

inline constexpr double kLowBandHalfWidth = 0.05;

/// CSV `u,v,confidence` with integer u, v.
void write_keypoints_csv(const std::filesystem::path& path, const std::vector<Keypoint>& kps);

}  // namespace reloc

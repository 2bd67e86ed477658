#pragma once

#include "reloc/geometry.hpp"
#include "reloc/image.hpp"

#include <vector>

namespace reloc {

struct LossWeights {
    double lambda_sim = 1.0;
    double lambda_rep = 0.1;
    double lambda_3d = 1.0;

    bool valid() const;
};

struct HeatmapLoss {
    double loss = 0.0;
    Heatmap grad;  // d loss / d pred
};

struct PointLoss {
    double loss = 0.0;
    std::vector<Eigen::Vector3d> grads;  // d loss / d predicted point
};

/// One minus the mean cosine similarity of corresponding N x N tiles.
/// Tiles do not overlap; right/bottom remainders are ignored. A tile pair
/// where both vectors are zero scores 1, exactly one zero scores 0; neither
/// case contributes gradient.
HeatmapLoss loss_sim(const Heatmap& pred, const Heatmap& target, int patch = 8);

inline constexpr double kRepDepthMin = 0.1;

/// Mean unsquared reprojection distance of predicted points under the
/// ground-truth camera. Throws BehindCamera(i) when depth_i <= kRepDepthMin.
PointLoss loss_rep(const std::vector<Point3>& coords, const std::vector<Pixel2>& pixels, const CameraIntrinsics& k,
                   const ScenePose& gt);

/// Mean Euclidean distance between predicted and reference points.
PointLoss loss_3d(const std::vector<Point3>& pred, const std::vector<Point3>& gt);

double loss_all(double sim, double rep, double l3d, const LossWeights& w);

}  // namespace reloc

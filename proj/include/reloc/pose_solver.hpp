#pragma once

#include "reloc/geometry.hpp"
#include "reloc/keypoints.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reloc {

struct RansacConfig {
    int iterations = 100;
    double inlier_threshold_px = 3.0;
    int refine_iterations = 10;
    std::uint64_t seed = 0;
};

struct PoseEstimate {
    ScenePose pose;
    std::vector<bool> inlier_mask;
    std::size_t inlier_count = 0;
    double mean_inlier_error = 0.0;  // px, under `pose`
    // Best minimal-sample hypothesis before refinement.
    ScenePose hypothesis;
    double hypothesis_mean_error = 0.0;
    std::size_t hypothesis_inlier_count = 0;
};

/// All poses consistent with three correspondences (at most four).
/// Throws DegenerateConfiguration for collinear world points or repeated pixels.
std::vector<ScenePose> p3p_solve(const std::vector<Correspondence>& corrs, const CameraIntrinsics& k);

/// Linear camera-matrix estimate from >= 6 correspondences, projected to the
/// nearest rotation. Throws DegenerateConfiguration / RankDeficient.
ScenePose dlt_solve(const std::vector<Correspondence>& corrs, const CameraIntrinsics& k);

/// Fixed-iteration P3P RANSAC followed by Gauss-Newton refinement.
/// Throws TooFewCorrespondences (< 4) and NoValidHypothesis.
PoseEstimate ransac_pnp(const std::vector<Correspondence>& corrs, const CameraIntrinsics& k, const RansacConfig& cfg);

struct RefineResult {
    ScenePose pose;
    std::vector<double> objective;  // sum of squared residuals; [0] is the initial value
};

/// Gauss-Newton on squared reprojection error with left-multiplied axis-angle
/// increments and step halving. Throws TooFewInliers (< 4) and BehindCamera.
RefineResult refine_pose_traced(const ScenePose& initial, const std::vector<Correspondence>& inliers,
                                const CameraIntrinsics& k, int iterations);
ScenePose refine_pose(const ScenePose& initial, const std::vector<Correspondence>& inliers,
                      const CameraIntrinsics& k, int iterations);

/// Squared reprojection error, or +inf when a point is behind the camera.
double reprojection_error(const CameraIntrinsics& k, const ScenePose& pose, const Correspondence& c);

/// Pose line plus ` inliers=<n>/<m> mean_err=<px>`.
std::string format_estimate(std::int64_t image_id, const PoseEstimate& est);

}  // namespace reloc

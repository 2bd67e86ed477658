#pragma once

#include "reloc/geometry.hpp"
#include "reloc/image.hpp"
#include "reloc/losses.hpp"
#include "reloc/regressor.hpp"
#include "reloc/scene_model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <utility>
#include <vector>

namespace reloc {

struct TrainSample {
    RgbImage image;
    Heatmap reference;                                  // target impulses
    std::vector<std::pair<Pixel2, Point3>> keypoints;   // reference pixel, world point
    ScenePose pose;
    CameraIntrinsics intrinsics;
};

/// One sample per frame of `model` that has an image: reference heatmap and
/// keypoints from the model's observations. Throws DimensionMismatch when an
/// image size differs from its frame intrinsics, EmptyDataset when no frame has
/// an image.
std::vector<TrainSample> build_dataset(const SceneModel& model, const std::map<std::int64_t, RgbImage>& images);

/// Sets coord_center to the centroid of the model points and coord_scale to
/// their RMS distance from it, so the linear coordinate head works in unit
/// range. Leaves the config unchanged for an empty model.
void fit_coord_normalization(RegressorConfig& cfg, const SceneModel& model);

struct TrainConfig {
    int stage1_iters = 2000;
    int stage2_iters = 1000;
    AdamParams adam;
    LossWeights weights;
    int batch_size = 4;
    int patch_size = 8;
    bool augment = true;
    double scale_min = 2.0 / 3.0;
    double scale_max = 3.0 / 2.0;
    double rotation_deg = 30.0;
    double color_jitter = 0.1;
    double pad_value = 128.0 / 255.0;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument.
    void validate() const;
};

struct Augmentation {
    double scale = 1.0;
    double rotation_deg = 0.0;
    std::array<double, 3> jitter{1.0, 1.0, 1.0};
};

/// Scales by s and rotates by theta about the principal point, keeping the
/// image size. Intrinsics become (s fx, s fy) with the same principal point,
/// the pose is rotated about the optical axis, keypoints map as
/// c + s Rot(theta) (p - c) and are dropped when they leave the frame.
TrainSample augment_sample(const TrainSample& s, const Augmentation& a, double pad_value);

struct TrainLogEntry {
    std::uint64_t iteration = 0;
    int stage = 1;
    double l_sim = 0.0;
    double l_rep = 0.0;
    double l_3d = 0.0;
    double l_all = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
};

/// Stage 1 (iterations [0, stage1_iters)) optimizes encoder + coordinate
/// decoder on L_3D; stage 2 optimizes everything on the weighted sum. The
/// randomness of iteration i depends only on (seed, i), so a run resumed from
/// `state` reproduces the uninterrupted run. Stops early when `stop_after`
/// total iterations have been reached. Throws EmptyDataset.
TrainLog train_staged(Regressor& model, const std::vector<TrainSample>& dataset, const TrainConfig& tc,
                      TrainState& state, std::uint64_t stop_after = ~std::uint64_t{0});
TrainLog train_staged(Regressor& model, const std::vector<TrainSample>& dataset, const TrainConfig& tc);

void write_loss_csv(const std::filesystem::path& path, const TrainLog& log);

}  // namespace reloc

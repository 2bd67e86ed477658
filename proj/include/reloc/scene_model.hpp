#pragma once

#include "reloc/geometry.hpp"
#include "reloc/image.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <utility>
#include <vector>

namespace reloc {

struct Frame {
    ScenePose pose;
    CameraIntrinsics intrinsics;
    bool operator==(const Frame& o) const;
};

struct Observation {
    std::int64_t point_id = 0;
    Pixel2 pixel = Pixel2::Zero();
};

/// Sparse SfM-style model: points, posed frames and per-frame visibility.
///
/// Pixel bounds follow the cell-center convention: a frame covers
/// [-0.5, width - 0.5) x [-0.5, height - 0.5).
struct SceneModel {
    std::map<std::int64_t, Point3> points;
    std::map<std::int64_t, Frame> frames;
    std::map<std::int64_t, std::vector<Observation>> visibility;

    const Frame& frame(std::int64_t image_id) const;
    /// Observations of a frame sorted by point id (empty when none recorded).
    std::vector<Observation> observations(std::int64_t image_id) const;

    bool operator==(const SceneModel& o) const;
};

bool in_bounds(const CameraIntrinsics& k, const Pixel2& p);

/// Throws ValidationError on dangling ids, out-of-bounds observations or
/// points that are not in front of the observing camera.
void validate(const SceneModel& model);

SceneModel parse_scene_model(std::istream& in);
SceneModel load_scene_model(const std::filesystem::path& path);
void write_scene_model(std::ostream& out, const SceneModel& model);
void save_scene_model(const std::filesystem::path& path, const SceneModel& model);

/// Binary target: 1 at the rounded GT-pose projection of each visible point.
Heatmap reference_heatmap(const SceneModel& model, std::int64_t image_id);

/// (observed pixel, world point) for each visible point, ascending point id.
std::vector<std::pair<Pixel2, Point3>> visible_observations(const SceneModel& model, std::int64_t image_id);

/// Copy of the model keeping only points accepted by `keep` (and their observations).
template <typename Pred>
SceneModel filter_points(const SceneModel& model, Pred keep) {
    SceneModel out;
    out.frames = model.frames;
    for (const auto& [id, p] : model.points)
        if (keep(id)) out.points.emplace(id, p);
    for (const auto& [img, obs] : model.visibility) {
        auto& dst = out.visibility[img];
        for (const auto& o : obs)
            if (out.points.count(o.point_id)) dst.push_back(o);
    }
    return out;
}

}  // namespace reloc

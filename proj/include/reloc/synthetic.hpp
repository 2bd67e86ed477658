#pragma once

#include "reloc/geometry.hpp"
#include "reloc/image.hpp"
#include "reloc/keypoints.hpp"
#include "reloc/scene_model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

namespace reloc {

enum class Region : std::uint8_t { background = 0, discriminative = 1, repetitive = 2 };

using RegionLabelMap = Grid<Region>;
using Color = std::array<std::uint8_t, 3>;

struct SynthSceneSpec {
    int points_discriminative = 240;
    int points_repetitive = 60;
    double box_extent = 10.0;  // edge length of the cube centred at the origin
    int cameras = 20;
    double ring_radius = 20.0;
    double camera_height = 4.0;
    int width = 640;
    int height = 480;
    int splat_px = 3;
    double pixel_noise = 0.0;
    std::uint64_t seed = 0;

    /// Throws InvalidSpec.
    void validate() const;
    double diameter() const;
};

/// 64x64 training scene: 12 discriminative and 8 repetitive points on 8
/// cameras, 7 px splats.
SynthSceneSpec toy_scene_spec(std::uint64_t seed = 1);

inline constexpr int kRepetitiveGroupSize = 8;
inline constexpr Color kBackgroundColor{128, 128, 128};

struct SyntheticScene {
    SynthSceneSpec spec;
    SceneModel model;                       // visibility: every in-view point of every frame
    std::map<std::int64_t, Color> colors;   // per point
    std::map<std::int64_t, Region> regions; // per point

    /// SfM analog: discriminative points only, and per frame only the
    /// observations whose reference cell the point's own splat owns in the
    /// rendering (a matcher cannot see occluded features).
    SceneModel reliable_model() const;
};

/// Points uniform in the box (discriminative ids first), cameras on a ring
/// looking at the origin, observations = exact projections + N(0, sigma^2).
///
/// RNG stream order: discriminative positions, repetitive positions, then the
/// noise of every (frame, point) pair in ascending order.
SyntheticScene generate_scene(const SynthSceneSpec& spec);

struct Rendering {
    RgbImage image;
    RegionLabelMap labels;
};

/// Z-buffered square splats of every visible point; nearer points win.
Rendering render_image(const SceneModel& model, std::int64_t image_id, const std::map<std::int64_t, Color>& colors,
                       const std::map<std::int64_t, Region>& regions, int splat_px);
Rendering render_image(const SyntheticScene& scene, std::int64_t image_id);

/// Ground-truth scene coordinates: every splat cell holds the backprojection
/// of its center at the depth of the point that owns it (zeros elsewhere).
struct CoordRendering {
    CoordMap coords;
    Grid<std::uint8_t> valid;
};
CoordRendering render_coords(const SceneModel& model, std::int64_t image_id, int splat_px);

/// Inclusive cell range covered by a splat centred on cell c.
std::pair<int, int> splat_range(int c, int splat_px);

/// Id of the point owning each cell after z-buffering, -1 for background.
Grid<std::int64_t> render_owners(const SceneModel& model, std::int64_t image_id, int splat_px);

struct CorruptedCorrespondences {
    std::vector<Correspondence> corrs;
    std::vector<bool> outlier;  // planted outliers
};

/// Adds N(0, sigma^2) pixel noise to every entry, then replaces the pixels of
/// floor(rho * n) seeded-chosen entries with uniform in-bounds pixels.
CorruptedCorrespondences corrupt_correspondences(const std::vector<Correspondence>& exact, double noise_px,
                                                 double outlier_fraction, const CameraIntrinsics& k,
                                                 std::uint64_t seed);

/// Heatmap/coordinates with confidence anti-correlated to coordinate noise.
/// Visible points are split alternately into a reliable class (confidence
/// uniform in [0.75, 1]) and an unreliable class (confidence uniform in
/// lo_score +- 0.04); each coordinate is perturbed in 3D by
/// N(0, (noise_scale * (1 - confidence))^2) per axis.
struct PlantedConfidence {
    double lo_score = 0.4;
    double noise_scale = 0.5;
};
struct FramePrediction {
    std::int64_t image_id = 0;
    Heatmap heatmap;
    CoordMap coords;
};
FramePrediction plant_confidence(const SceneModel& model, std::int64_t image_id, const PlantedConfidence& params,
                                 std::uint64_t seed);

/// Writes `point_id region r g b` lines.
void save_point_table(const std::filesystem::path& path, const SyntheticScene& scene);
void load_point_table(const std::filesystem::path& path, std::map<std::int64_t, Color>& colors,
                      std::map<std::int64_t, Region>& regions);

/// Label map as PGM: background 0, discriminative 255, repetitive 128.
void write_label_pgm(const std::filesystem::path& path, const RegionLabelMap& labels);
std::uint8_t label_gray(Region r);

}  // namespace reloc

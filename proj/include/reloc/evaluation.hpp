#pragma once

#include "reloc/keypoints.hpp"
#include "reloc/pose_solver.hpp"
#include "reloc/regressor.hpp"
#include "reloc/scene_model.hpp"
#include "reloc/synthetic.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reloc {

/// Heatmap + coordinate source for a frame.
class FramePredictor {
public:
    virtual ~FramePredictor() = default;
    virtual FramePrediction predict(std::int64_t image_id) = 0;
};

/// Reference heatmap and exact scene coordinates at the reference cells.
class GroundTruthPredictor : public FramePredictor {
public:
    explicit GroundTruthPredictor(const SceneModel& model) : model_(model) {}
    FramePrediction predict(std::int64_t image_id) override;

private:
    const SceneModel& model_;
};

class RegressorPredictor : public FramePredictor {
public:
    RegressorPredictor(Regressor& model, std::map<std::int64_t, RgbImage> images)
        : model_(model), images_(std::move(images)) {}
    FramePrediction predict(std::int64_t image_id) override;

private:
    Regressor& model_;
    std::map<std::int64_t, RgbImage> images_;
};

struct Corruption {
    double noise_px = 0.0;
    double outlier_fraction = 0.0;
    std::uint64_t seed = 0;
};

struct FrameResult {
    std::int64_t image_id = 0;
    bool ok = false;
    std::string failure;  // "insufficient keypoints" / "no valid hypothesis"
    ScenePose pose;
    PoseError error;
    std::size_t correspondences = 0;
    std::size_t inliers = 0;
    double mean_inlier_error = 0.0;
    double pose_time_ms = 0.0;
};

struct LocalizationReport {
    std::vector<FrameResult> frames;
    double median_translation = 0.0;
    double median_rotation_deg = 0.0;
    std::size_t failures = 0;

    /// Lower medians over successful frames.
    void finalize();
};

/// Lower median: element (n - 1) / 2 of the sorted values; NaN when empty.
double lower_median(std::vector<double> values);

/// predict -> nms_select -> gather -> (corrupt) -> ransac_pnp -> pose_errors.
/// Frame i uses RANSAC seed derive_seed(cfg.seed, image_id); corruption seeds likewise.
LocalizationReport evaluate_localization(FramePredictor& predictor, const SceneModel& model,
                                         const std::vector<std::int64_t>& image_ids, const NmsParams& nms,
                                         const RansacConfig& cfg, const std::optional<Corruption>& corruption = {});

/// Budget presets: per-scene average correspondence counts of the reference system.
inline const std::vector<int> kBudgetPresets{600, 250, 130, 500};

std::vector<std::pair<int, LocalizationReport>> sweep_budgets(FramePredictor& predictor, const SceneModel& model,
                                                              const std::vector<std::int64_t>& image_ids,
                                                              NmsParams nms, const std::vector<int>& budgets,
                                                              const RansacConfig& cfg);

struct AblationReport {
    LocalizationReport high;
    LocalizationReport low;
    std::vector<std::int64_t> skipped;  // frames where one set could not be filled
};

AblationReport ablate_confidence_sets(const std::vector<FramePrediction>& frames, const SceneModel& model,
                                      int count, double hi_thresh, double lo_score, const RansacConfig& cfg,
                                      int radius = 4);

struct BenchRow {
    int count = 0;
    double median_ms = 0.0;
    std::size_t inliers = 0;
    ScenePose pose;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    /// time(last count) / time(first count)
    double ratio() const;
};

/// Pose-step timing on a fixed synthetic camera with 1 px noise and 30%
/// planted outliers; the correspondence sets are nested prefixes of one pool.
BenchReport bench_pose_runtime(const std::vector<int>& counts, int trials, const RansacConfig& cfg,
                               std::uint64_t seed);

struct SelectivityReport {
    double mean_discriminative = 0.0;
    double mean_repetitive = 0.0;
    double mean_background = 0.0;
    std::size_t pixels_discriminative = 0, pixels_repetitive = 0, pixels_background = 0;
    bool selective() const {
        return mean_discriminative > mean_repetitive && mean_discriminative > mean_background;
    }
};

/// Mean predicted confidence per region class. Throws MissingLabels.
SelectivityReport selectivity_report(Regressor& model, const std::vector<RgbImage>& images,
                                     const std::vector<RegionLabelMap>& labels);

/// One JSON object per frame, then a {"summary": ...} line.
void write_report_jsonl(const std::filesystem::path& path, const LocalizationReport& report, bool with_timing);
std::string format_table(const std::string& scene_name, const LocalizationReport& report);

}  // namespace reloc

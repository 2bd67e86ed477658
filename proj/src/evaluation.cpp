#include "reloc/evaluation.hpp"

#include "reloc/errors.hpp"
#include "reloc/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace reloc {

FramePrediction GroundTruthPredictor::predict(std::int64_t image_id) {
    FramePrediction p;
    p.image_id = image_id;
    p.heatmap = reference_heatmap(model_, image_id);
    p.coords = render_coords(model_, image_id, 1).coords;
    return p;
}

FramePrediction RegressorPredictor::predict(std::int64_t image_id) {
    const auto it = images_.find(image_id);
    if (it == images_.end()) throw UnknownImage(image_id);
    RegressorOutput out = model_.forward(it->second);
    return {image_id, std::move(out.heatmap), std::move(out.coords)};
}

double lower_median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

void LocalizationReport::finalize() {
    std::vector<double> t, r;
    failures = 0;
    for (const auto& f : frames) {
        if (!f.ok) {
            ++failures;
            continue;
        }
        if (std::isfinite(f.error.translation)) t.push_back(f.error.translation);
        if (std::isfinite(f.error.rotation_deg)) r.push_back(f.error.rotation_deg);
    }
    median_translation = lower_median(t);
    median_rotation_deg = lower_median(r);
}

namespace {

FrameResult localize_frame(std::int64_t image_id, const std::vector<Correspondence>& corrs, const Frame& frame,
                           const RansacConfig& cfg) {
    FrameResult fr;
    fr.image_id = image_id;
    fr.correspondences = corrs.size();
    RansacConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(image_id));
    if (corrs.size() < 4) {
        fr.failure = "insufficient keypoints";
        return fr;
    }
    try {
        const auto t0 = std::chrono::steady_clock::now();
        const PoseEstimate est = ransac_pnp(corrs, frame.intrinsics, c);
        const auto t1 = std::chrono::steady_clock::now();
        fr.pose_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        fr.ok = true;
        fr.pose = est.pose;
        fr.error = pose_errors(est.pose, frame.pose);
        fr.inliers = est.inlier_count;
        fr.mean_inlier_error = est.mean_inlier_error;
    } catch (const NoValidHypothesis&) {
        fr.failure = "no valid hypothesis";
    }
    return fr;
}

}  // namespace

LocalizationReport evaluate_localization(FramePredictor& predictor, const SceneModel& model,
                                         const std::vector<std::int64_t>& image_ids, const NmsParams& nms,
                                         const RansacConfig& cfg, const std::optional<Corruption>& corruption) {
    LocalizationReport report;
    for (const std::int64_t id : image_ids) {
        const Frame& frame = model.frame(id);
        const FramePrediction pred = predictor.predict(id);
        std::vector<Correspondence> corrs = gather_correspondences(nms_select(pred.heatmap, nms), pred.coords);
        if (corruption)
            corrs = corrupt_correspondences(corrs, corruption->noise_px, corruption->outlier_fraction,
                                            frame.intrinsics,
                                            derive_seed(corruption->seed, static_cast<std::uint64_t>(id)))
                        .corrs;
        report.frames.push_back(localize_frame(id, corrs, frame, cfg));
    }
    report.finalize();
    return report;
}

std::vector<std::pair<int, LocalizationReport>> sweep_budgets(FramePredictor& predictor, const SceneModel& model,
                                                              const std::vector<std::int64_t>& image_ids,
                                                              NmsParams nms, const std::vector<int>& budgets,
                                                              const RansacConfig& cfg) {
    std::vector<std::pair<int, LocalizationReport>> out;
    for (const int b : budgets) {
        nms.max_count = b;
        out.emplace_back(b, evaluate_localization(predictor, model, image_ids, nms, cfg));
    }
    return out;
}

AblationReport ablate_confidence_sets(const std::vector<FramePrediction>& frames, const SceneModel& model,
                                      int count, double hi_thresh, double lo_score, const RansacConfig& cfg,
                                      int radius) {
    AblationReport rep;
    for (const auto& fp : frames) {
        ConfidenceSplit split;
        try {
            split = split_by_confidence(fp.heatmap, fp.coords, hi_thresh, lo_score, count, radius);
        } catch (const InsufficientKeypoints&) {
            rep.skipped.push_back(fp.image_id);
            continue;
        }
        const Frame& frame = model.frame(fp.image_id);
        rep.high.frames.push_back(localize_frame(fp.image_id, split.high, frame, cfg));
        rep.low.frames.push_back(localize_frame(fp.image_id, split.low, frame, cfg));
    }
    rep.high.finalize();
    rep.low.finalize();
    return rep;
}

double BenchReport::ratio() const {
    if (rows.size() < 2 || !(rows.front().median_ms > 0)) return std::numeric_limits<double>::quiet_NaN();
    return rows.back().median_ms / rows.front().median_ms;
}

BenchReport bench_pose_runtime(const std::vector<int>& counts, int trials, const RansacConfig& cfg,
                               std::uint64_t seed) {
    const int max_count = *std::max_element(counts.begin(), counts.end());
    const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
    const ScenePose gt(axis_angle_rotation({0.2, 1.0, -0.3}, 25.0), Eigen::Vector3d(0.5, -0.3, 2.0));
    Rng rng(seed);
    std::vector<Correspondence> pool;
    for (int i = 0; i < max_count; ++i) {
        const Pixel2 p{rng.uniform(-0.5, k.width - 0.5), rng.uniform(-0.5, k.height - 0.5)};
        pool.push_back({p, backproject(k, gt, p, rng.uniform(8.0, 25.0)), 1.0});
    }
    BenchReport rep;
    for (const int n : counts) {
        if (n < 4) throw std::invalid_argument("bench counts must be >= 4");
        const std::vector<Correspondence> exact(pool.begin(), pool.begin() + n);
        const auto corrupted = corrupt_correspondences(exact, 1.0, 0.3, k, derive_seed(seed, 1));
        std::vector<double> times;
        BenchRow row{n, 0.0, 0, {}};
        for (int t = 0; t < trials; ++t) {
            const auto t0 = std::chrono::steady_clock::now();
            const PoseEstimate est = ransac_pnp(corrupted.corrs, k, cfg);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            row.inliers = est.inlier_count;
            row.pose = est.pose;
        }
        row.median_ms = lower_median(times);
        rep.rows.push_back(row);
    }
    return rep;
}

SelectivityReport selectivity_report(Regressor& model, const std::vector<RgbImage>& images,
                                     const std::vector<RegionLabelMap>& labels) {
    if (images.empty() || labels.size() != images.size())
        throw MissingLabels("every frame needs a region label map");
    SelectivityReport rep;
    double sums[3] = {0, 0, 0};
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i].width != images[i].width || labels[i].height != images[i].height)
            throw MissingLabels("label map size does not match its frame");
        const RegressorOutput out = model.forward(images[i]);
        for (std::size_t p = 0; p < labels[i].size(); ++p) {
            const int cls = static_cast<int>(labels[i].values[p]);
            sums[cls] += out.heatmap.values[p];
            ++counts[cls];
        }
    }
    for (std::size_t c = 0; c < 3; ++c)
        if (counts[c] == 0) throw MissingLabels("no pixels labelled with region class " + std::to_string(c));
    rep.mean_background = sums[0] / static_cast<double>(counts[0]);
    rep.mean_discriminative = sums[1] / static_cast<double>(counts[1]);
    rep.mean_repetitive = sums[2] / static_cast<double>(counts[2]);
    rep.pixels_background = counts[0];
    rep.pixels_discriminative = counts[1];
    rep.pixels_repetitive = counts[2];
    return rep;
}

void write_report_jsonl(const std::filesystem::path& path, const LocalizationReport& report, bool with_timing) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& f : report.frames) {
        nlohmann::ordered_json j;
        j["image_id"] = f.image_id;
        j["ok"] = f.ok;
        if (!f.ok) j["failure"] = f.failure;
        j["correspondences"] = f.correspondences;
        if (f.ok) {
            j["trans_err"] = f.error.translation;
            j["rot_err_deg"] = f.error.rotation_deg;
            j["inliers"] = f.inliers;
            j["mean_inlier_err_px"] = f.mean_inlier_error;
            j["pose"] = format_pose_line(f.image_id, f.pose);
        }
        if (with_timing) j["pose_time_ms"] = f.pose_time_ms;
        out << j.dump() << "\n";
    }
    nlohmann::ordered_json s;
    s["frames"] = report.frames.size();
    s["failures"] = report.failures;
    s["median_trans_err"] = report.median_translation;
    s["median_rot_err_deg"] = report.median_rotation_deg;
    out << nlohmann::ordered_json{{"summary", s}}.dump() << "\n";
}

std::string format_table(const std::string& scene_name, const LocalizationReport& report) {
    char buf[256];
    std::string out = "Scene                    | median error (trans, rot) | failed\n";
    out += "-------------------------+---------------------------+-------\n";
    std::snprintf(buf, sizeof buf, "%-24s | %10.4g, %8.4g deg | %zu/%zu\n", scene_name.c_str(),
                  report.median_translation, report.median_rotation_deg, report.failures, report.frames.size());
    return out + buf;
}

}  // namespace reloc

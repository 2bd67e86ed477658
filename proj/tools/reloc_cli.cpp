// reloc_cli: scripted entry points for scene generation, training, localization and evaluation.
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 localization
// failure, 5 internal invariant violation.

#include "reloc/errors.hpp"
#include "reloc/evaluation.hpp"
#include "reloc/gradcheck.hpp"
#include "reloc/image.hpp"
#include "reloc/keypoints.hpp"
#include "reloc/pose_solver.hpp"
#include "reloc/regressor.hpp"
#include "reloc/rng.hpp"
#include "reloc/scene_model.hpp"
#include "reloc/synthetic.hpp"
#include "reloc/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace reloc;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitLocalization = 4;
constexpr int kExitInternal = 5;

struct UsageError : Error {
    using Error::Error;
};

struct Common {
    std::uint64_t seed = 0;
    std::string config;
    std::string out = ".";
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
    sub->add_option("--config", c.config, "key=value file with architecture settings");
    sub->add_option("--out", c.out, "output directory")->capture_default_str();
}

std::string frame_name(std::int64_t id) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "frame_%06lld.ppm", static_cast<long long>(id));
    return buf;
}

std::string label_name(std::int64_t id) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "label_%06lld.pgm", static_cast<long long>(id));
    return buf;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("bad integer list: " + s);
        }
    }
    if (out.empty()) throw UsageError("empty integer list");
    return out;
}

Activation parse_activation(const std::string& v) {
    if (v == "relu") return Activation::relu;
    if (v == "elu") return Activation::elu;
    if (v == "identity") return Activation::identity;
    throw UsageError("unknown activation: " + v);
}

// Architecture settings only; everything experiment-related is a flag.
std::vector<std::pair<std::string, std::string>> apply_config_file(const std::string& path, RegressorConfig& cfg,
                                                                   bool& has_coord_norm) {
    std::vector<std::pair<std::string, std::string>> applied;
    if (path.empty()) return applied;
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto s0 = s.find_first_not_of(" \t\r");
            const auto s1 = s.find_last_not_of(" \t\r");
            return s0 == std::string::npos ? std::string() : s.substr(s0, s1 - s0 + 1);
        };
        const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        try {
            if (key == "encoder_channels") {
                cfg.encoder_channels = parse_int_list(val);
            } else if (key == "encoder_activation") {
                cfg.encoder_activation = parse_activation(val);
            } else if (key == "heatmap_hidden_activation") {
                cfg.heatmap_hidden_activation = parse_activation(val);
            } else if (key == "coord_hidden_activation") {
                cfg.coord_hidden_activation = parse_activation(val);
            } else if (key == "zero_init_heads") {
                if (val != "true" && val != "false") throw UsageError("zero_init_heads must be true or false");
                cfg.zero_init_heads = val == "true";
            } else if (key == "input_mean") {
                cfg.input_mean = std::stod(val);
            } else if (key == "input_std") {
                cfg.input_std = std::stod(val);
            } else if (key == "coord_scale") {
                cfg.coord_scale = std::stod(val);
                has_coord_norm = true;
            } else if (key == "coord_center") {
                std::stringstream ss(val);
                std::string c;
                for (int i = 0; i < 3; ++i) {
                    if (!std::getline(ss, c, ',')) throw UsageError("coord_center needs x,y,z");
                    cfg.coord_center[i] = std::stod(c);
                }
                has_coord_norm = true;
            } else {
                throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
            }
        } catch (const std::invalid_argument&) {
            throw UsageError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
        }
        applied.emplace_back(key, val);
    }
    return applied;
}

void print_resolved(const CLI::App* sub, const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    std::string line = "config: command=" + sub->get_name();
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_name() == "--help") continue;
        std::string value;
        if (opt->count() > 0) {
            const auto& r = opt->results();
            for (std::size_t i = 0; i < r.size(); ++i) value += (i ? "," : "") + r[i];
            if (r.empty()) value = "true";
        } else {
            value = opt->get_default_str();
            if (value.empty()) value = opt->get_expected_min() == 0 ? "false" : "-";
        }
        line += " " + opt->get_name().substr(2) + "=" + value;
    }
    for (const auto& [k, v] : extra) line += " arch." + k + "=" + v;
    std::cerr << line << std::endl;
}

std::map<std::int64_t, RgbImage> load_frames(const fs::path& dir, const SceneModel& model) {
    if (!fs::is_directory(dir)) throw UsageError("frames directory not found: " + dir.string());
    std::map<std::int64_t, RgbImage> out;
    for (const auto& [id, f] : model.frames) {
        const fs::path p = dir / frame_name(id);
        if (fs::exists(p)) out.emplace(id, read_ppm(p));
    }
    return out;
}

// ---- subcommands ----

struct SynthArgs {
    SynthSceneSpec spec;
    bool toy = false;
};

// --toy starts from the training-scene preset; explicit flags still win.
void apply_toy_preset(CLI::App* sub, SynthSceneSpec& spec) {
    const SynthSceneSpec toy = toy_scene_spec();
    const auto keep = [&](const char* name, auto& field, const auto& preset) {
        CLI::Option* opt = sub->get_option(name);
        if (opt->count() > 0) return;
        field = preset;
        std::ostringstream os;
        os << preset;
        opt->default_str(os.str());
    };
    keep("--points-disc", spec.points_discriminative, toy.points_discriminative);
    keep("--points-rep", spec.points_repetitive, toy.points_repetitive);
    keep("--box", spec.box_extent, toy.box_extent);
    keep("--cameras", spec.cameras, toy.cameras);
    keep("--ring-radius", spec.ring_radius, toy.ring_radius);
    keep("--camera-height", spec.camera_height, toy.camera_height);
    keep("--width", spec.width, toy.width);
    keep("--height", spec.height, toy.height);
    keep("--splat", spec.splat_px, toy.splat_px);
    keep("--noise", spec.pixel_noise, toy.pixel_noise);
}

int run_synth_gen(const Common& c, SynthArgs& a) {
    a.spec.seed = c.seed;
    SyntheticScene scene;
    try {
        scene = generate_scene(a.spec);
    } catch (const InvalidSpec& e) {
        throw UsageError(e.what());
    }
    const fs::path out(c.out);
    fs::create_directories(out / "frames");
    fs::create_directories(out / "labels");
    save_scene_model(out / "scene.scene1", scene.model);
    save_scene_model(out / "sfm.scene1", scene.reliable_model());
    save_point_table(out / "points.txt", scene);
    for (const auto& [id, f] : scene.model.frames) {
        const Rendering r = render_image(scene, id);
        write_ppm(out / "frames" / frame_name(id), r.image);
        write_label_pgm(out / "labels" / label_name(id), r.labels);
    }
    std::cout << "wrote " << scene.model.points.size() << " points, " << scene.model.frames.size() << " frames to "
              << out.string() << "\n";
    return 0;
}

struct RenderArgs {
    std::string scene, points;
    std::int64_t image_id = 0;
    int splat = 3;
};

int run_render(const Common& c, const RenderArgs& a) {
    const SceneModel model = load_scene_model(a.scene);
    std::map<std::int64_t, Color> colors;
    std::map<std::int64_t, Region> regions;
    load_point_table(a.points, colors, regions);
    const Rendering r = render_image(model, a.image_id, colors, regions, a.splat);
    fs::create_directories(c.out);
    write_ppm(fs::path(c.out) / frame_name(a.image_id), r.image);
    write_label_pgm(fs::path(c.out) / label_name(a.image_id), r.labels);
    return 0;
}

struct HeatmapRefArgs {
    std::string scene;
    std::int64_t image_id = 0;
};

int run_heatmap_ref(const Common& c, const HeatmapRefArgs& a) {
    const SceneModel model = load_scene_model(a.scene);
    const Heatmap h = reference_heatmap(model, a.image_id);
    fs::create_directories(c.out);
    char buf[64];
    std::snprintf(buf, sizeof buf, "heatmap_%06lld.pgm", static_cast<long long>(a.image_id));
    write_pgm(fs::path(c.out) / buf, h);
    return 0;
}

struct TrainArgs {
    std::string scene, frames, resume;
    TrainConfig tc;
    std::uint64_t stop_after = ~std::uint64_t{0};
    bool no_augment = false;
};

int run_train(const Common& c, TrainArgs& a, const CLI::App* sub) {
    RegressorConfig rc;
    bool has_norm = false;
    const auto arch = apply_config_file(c.config, rc, has_norm);
    print_resolved(sub, arch);
    const SceneModel model = load_scene_model(a.scene);
    const auto images = load_frames(a.frames, model);
    const std::vector<TrainSample> dataset = build_dataset(model, images);
    a.tc.seed = c.seed;
    a.tc.augment = !a.no_augment;
    try {
        a.tc.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    TrainState state;
    std::optional<Regressor> net;
    if (!a.resume.empty()) {
        std::optional<TrainState> st;
        net.emplace(load_checkpoint(a.resume, &st));
        if (st) state = *st;
    } else {
        rc.input_width = dataset.front().image.width;
        rc.input_height = dataset.front().image.height;
        rc.seed = c.seed;
        if (!has_norm) fit_coord_normalization(rc, model);
        try {
            rc.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        net.emplace(rc);
    }
    const TrainLog log = train_staged(*net, dataset, a.tc, state, a.stop_after);
    fs::create_directories(c.out);
    save_checkpoint(fs::path(c.out) / "model.ckpt", *net, &state);
    write_loss_csv(fs::path(c.out) / "loss.csv", log);
    std::cout << "trained to iteration " << state.iteration << "\n";
    return 0;
}

struct LocalizeArgs {
    std::string checkpoint, image, scene, oracle_coords, export_heatmap, export_keypoints;
    std::optional<std::int64_t> image_id;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    NmsParams nms;
    RansacConfig ransac;
};

int run_localize(const Common& c, LocalizeArgs& a) {
    a.ransac.seed = c.seed;
    FramePrediction pred;
    CameraIntrinsics k;
    std::int64_t id = a.image_id.value_or(0);
    if (!a.oracle_coords.empty()) {
        if (!a.image_id) throw UsageError("--oracle-coords needs --image-id");
        const SceneModel model = load_scene_model(a.oracle_coords);
        k = model.frame(id).intrinsics;
        GroundTruthPredictor gp(model);
        pred = gp.predict(id);
    } else {
        if (a.checkpoint.empty() || a.image.empty()) throw UsageError("need --checkpoint and --image (or --oracle-coords)");
        Regressor net = load_checkpoint(a.checkpoint);
        const RgbImage img = read_ppm(a.image);
        if (!a.scene.empty()) {
            if (!a.image_id) throw UsageError("--scene needs --image-id");
            k = load_scene_model(a.scene).frame(id).intrinsics;
        } else {
            if (!(a.fx > 0 && a.fy > 0)) throw UsageError("need --fx/--fy/--cx/--cy or --scene with --image-id");
            k = {a.fx, a.fy, a.cx, a.cy, img.width, img.height};
        }
        RegressorOutput out = net.forward(img);
        pred = {id, std::move(out.heatmap), std::move(out.coords)};
    }
    const std::vector<Keypoint> kps = nms_select(pred.heatmap, a.nms);
    if (!a.export_heatmap.empty()) write_pgm(a.export_heatmap, pred.heatmap);
    if (!a.export_keypoints.empty()) write_keypoints_csv(a.export_keypoints, kps);
    if (kps.size() < 4) throw InsufficientKeypoints("nms", kps.size());
    const PoseEstimate est = ransac_pnp(gather_correspondences(kps, pred.coords), k, a.ransac);
    const std::string line = format_pose_line(id, est.pose);
    fs::create_directories(c.out);
    std::ofstream(fs::path(c.out) / "pose.txt") << line << "\n";
    std::cout << line << "\n" << format_estimate(id, est) << "\n";
    return 0;
}

struct EvalArgs {
    std::string scene, checkpoint, frames, scene_name = "synthetic";
    bool oracle = false, table = false, timing = false, ablate = false, presets = false;
    std::string budgets;
    double noise = 0.0, outliers = 0.0;
    NmsParams nms;
    RansacConfig ransac;
    int count = 200;
    double lo_score = 0.4;
};

int run_eval(const Common& c, EvalArgs& a) {
    a.ransac.seed = c.seed;
    const SceneModel model = load_scene_model(a.scene);
    std::vector<std::int64_t> ids;
    for (const auto& [id, f] : model.frames) ids.push_back(id);
    const fs::path out(c.out);
    fs::create_directories(out);

    std::optional<Regressor> net;
    std::unique_ptr<FramePredictor> predictor;
    if (a.oracle) {
        predictor = std::make_unique<GroundTruthPredictor>(model);
    } else {
        if (a.checkpoint.empty() || a.frames.empty()) throw UsageError("need --checkpoint and --frames (or --oracle)");
        net.emplace(load_checkpoint(a.checkpoint));
        auto images = load_frames(a.frames, model);
        ids.clear();
        for (const auto& [id, img] : images) ids.push_back(id);
        predictor = std::make_unique<RegressorPredictor>(*net, std::move(images));
    }

    if (a.ablate) {
        std::vector<FramePrediction> preds;
        for (const std::int64_t id : ids)
            preds.push_back(a.oracle ? plant_confidence(model, id, PlantedConfidence{a.lo_score, 0.5},
                                                        derive_seed(c.seed, static_cast<std::uint64_t>(id)))
                                     : predictor->predict(id));
        const AblationReport rep =
            ablate_confidence_sets(preds, model, a.count, a.nms.threshold, a.lo_score, a.ransac, a.nms.radius);
        write_report_jsonl(out / "report_hi.jsonl", rep.high, a.timing);
        write_report_jsonl(out / "report_lo.jsonl", rep.low, a.timing);
        std::cout << format_table(a.scene_name + " (high)", rep.high) << format_table(a.scene_name + " (low)", rep.low)
                  << "skipped frames: " << rep.skipped.size() << "\n";
        return 0;
    }

    std::vector<int> budgets;
    if (a.presets) budgets = kBudgetPresets;
    if (!a.budgets.empty()) budgets = parse_int_list(a.budgets);
    std::optional<Corruption> corr;
    if (a.noise > 0 || a.outliers > 0) corr = Corruption{a.noise, a.outliers, c.seed};
    if (budgets.empty()) {
        const LocalizationReport rep = evaluate_localization(*predictor, model, ids, a.nms, a.ransac, corr);
        write_report_jsonl(out / "report.jsonl", rep, a.timing);
        if (a.table) std::cout << format_table(a.scene_name, rep);
        std::cout << "median_trans_err=" << rep.median_translation << " median_rot_err_deg=" << rep.median_rotation_deg
                  << " failures=" << rep.failures << "/" << rep.frames.size() << "\n";
        return 0;
    }
    for (const int b : budgets) {
        NmsParams nms = a.nms;
        nms.max_count = b;
        const LocalizationReport rep = evaluate_localization(*predictor, model, ids, nms, a.ransac, corr);
        write_report_jsonl(out / ("report_budget_" + std::to_string(b) + ".jsonl"), rep, a.timing);
        std::cout << format_table(a.scene_name + " @" + std::to_string(b), rep);
    }
    return 0;
}

struct BenchArgs {
    std::string counts = "200,4800";
    int trials = 5;
    RansacConfig ransac;
};

int run_bench(const Common& c, BenchArgs& a) {
    a.ransac.seed = c.seed;
    const std::vector<int> counts = parse_int_list(a.counts);
    for (const int n : counts)
        if (n < 4) throw UsageError("counts must be >= 4");
    if (a.trials < 1) throw UsageError("--trials must be >= 1");
    const BenchReport rep = bench_pose_runtime(counts, a.trials, a.ransac, c.seed);
    const fs::path out(c.out);
    fs::create_directories(out);
    std::ofstream timing(out / "bench_timing.csv");
    std::ofstream results(out / "bench_results.txt");
    timing << "count,median_ms\n";
    std::printf("%8s %12s %8s\n", "count", "median_ms", "inliers");
    for (const auto& r : rep.rows) {
        std::printf("%8d %12.4f %8zu\n", r.count, r.median_ms, r.inliers);
        timing << r.count << "," << r.median_ms << "\n";
        results << r.count << " inliers=" << r.inliers << " " << format_pose_line(r.count, r.pose) << "\n";
    }
    std::printf("ratio %.3f\n", rep.ratio());
    timing << "ratio," << rep.ratio() << "\n";
    return 0;
}

struct GradArgs {
    int seeds = 20;
};

int run_gradcheck(const Common& c, const GradArgs& a) {
    if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
    const auto results = run_gradient_checks(c.seed, a.seeds);
    std::map<std::string, GradCheckResult> worst;
    for (const auto& r : results) {
        auto [it, fresh] = worst.emplace(r.name, r);
        if (!fresh && r.max_rel_error > it->second.max_rel_error) it->second = r;
    }
    bool ok = true;
    fs::create_directories(c.out);
    std::ofstream rep(fs::path(c.out) / "gradcheck.txt");
    char buf[256];
    for (const auto& [name, r] : worst) {
        std::snprintf(buf, sizeof buf, "%-18s max_rel_err=%.3e tol=%.0e %s\n", name.c_str(), r.max_rel_error,
                      r.tolerance, r.pass() ? "ok" : "FAILED");
        std::cout << buf;
        rep << buf;
        ok = ok && r.pass();
    }
    return ok ? 0 : kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Camera relocalization toolkit"};
    app.require_subcommand(1);

    Common common;

    SynthArgs synth;
    auto* sg = app.add_subcommand("synth-gen", "generate a synthetic scene, frames and labels");
    add_common(sg, common);
    sg->add_option("--points-disc", synth.spec.points_discriminative)->capture_default_str();
    sg->add_option("--points-rep", synth.spec.points_repetitive)->capture_default_str();
    sg->add_option("--box", synth.spec.box_extent)->capture_default_str();
    sg->add_option("--cameras", synth.spec.cameras)->capture_default_str();
    sg->add_option("--ring-radius", synth.spec.ring_radius)->capture_default_str();
    sg->add_option("--camera-height", synth.spec.camera_height)->capture_default_str();
    sg->add_option("--width", synth.spec.width)->capture_default_str();
    sg->add_option("--height", synth.spec.height)->capture_default_str();
    sg->add_option("--splat", synth.spec.splat_px)->capture_default_str();
    sg->add_option("--noise", synth.spec.pixel_noise)->capture_default_str();
    sg->add_flag("--toy", synth.toy, "start from the 64x64 training-scene preset");

    RenderArgs render;
    auto* rd = app.add_subcommand("render", "render one frame of a scene");
    add_common(rd, common);
    rd->add_option("--scene", render.scene)->required();
    rd->add_option("--points", render.points, "point table from synth-gen")->required();
    rd->add_option("--image-id", render.image_id)->required();
    rd->add_option("--splat", render.splat)->capture_default_str();

    HeatmapRefArgs href;
    auto* hr = app.add_subcommand("heatmap-ref", "write the reference heatmap of a frame");
    add_common(hr, common);
    hr->add_option("--scene", href.scene)->required();
    hr->add_option("--image-id", href.image_id)->required();

    TrainArgs train;
    auto* tr = app.add_subcommand("train", "staged training of the regressor");
    add_common(tr, common);
    tr->add_option("--scene", train.scene, "SfM-style model with training frames")->required();
    tr->add_option("--frames", train.frames, "directory of frame_<id>.ppm")->required();
    tr->add_option("--stage1-iters", train.tc.stage1_iters)->capture_default_str();
    tr->add_option("--stage2-iters", train.tc.stage2_iters)->capture_default_str();
    tr->add_option("--batch", train.tc.batch_size)->capture_default_str();
    tr->add_option("--lr", train.tc.adam.lr)->capture_default_str();
    tr->add_option("--weight-decay", train.tc.adam.weight_decay)->capture_default_str();
    tr->add_option("--lambda-sim", train.tc.weights.lambda_sim)->capture_default_str();
    tr->add_option("--lambda-rep", train.tc.weights.lambda_rep)->capture_default_str();
    tr->add_option("--lambda-3d", train.tc.weights.lambda_3d)->capture_default_str();
    tr->add_option("--patch", train.tc.patch_size)->capture_default_str();
    tr->add_flag("--no-augment", train.no_augment);
    tr->add_option("--resume", train.resume, "checkpoint to continue from");
    tr->add_option("--stop-after", train.stop_after, "stop once this many total iterations are done");

    LocalizeArgs loc;
    auto* lc = app.add_subcommand("localize", "estimate the pose of one frame");
    add_common(lc, common);
    lc->add_option("--checkpoint", loc.checkpoint);
    lc->add_option("--image", loc.image);
    lc->add_option("--scene", loc.scene, "take intrinsics from this model");
    lc->add_option("--image-id", loc.image_id);
    lc->add_option("--fx", loc.fx);
    lc->add_option("--fy", loc.fy);
    lc->add_option("--cx", loc.cx);
    lc->add_option("--cy", loc.cy);
    lc->add_option("--oracle-coords", loc.oracle_coords, "use ground-truth coordinates of this model");
    lc->add_option("--export-heatmap", loc.export_heatmap);
    lc->add_option("--export-keypoints", loc.export_keypoints);
    lc->add_option("--threshold", loc.nms.threshold)->capture_default_str();
    lc->add_option("--radius", loc.nms.radius)->capture_default_str();
    lc->add_option("--max-count", loc.nms.max_count)->capture_default_str();
    lc->add_option("--iterations", loc.ransac.iterations)->capture_default_str();
    lc->add_option("--inlier-px", loc.ransac.inlier_threshold_px)->capture_default_str();

    EvalArgs ev;
    auto* el = app.add_subcommand("eval", "localize every frame and report median errors");
    add_common(el, common);
    el->add_option("--scene", ev.scene, "model with ground-truth poses")->required();
    el->add_flag("--oracle", ev.oracle, "ground-truth coordinates instead of a checkpoint");
    el->add_option("--checkpoint", ev.checkpoint);
    el->add_option("--frames", ev.frames);
    el->add_option("--noise", ev.noise, "pixel noise sigma of the corruptor")->capture_default_str();
    el->add_option("--outliers", ev.outliers, "planted outlier fraction")->capture_default_str();
    el->add_option("--budgets", ev.budgets, "comma-separated correspondence budgets");
    el->add_flag("--budget-presets", ev.presets, "sweep the preset budgets 600,250,130,500");
    el->add_flag("--ablate", ev.ablate, "high- vs low-confidence correspondence sets");
    el->add_option("--count", ev.count, "set size for --ablate")->capture_default_str();
    el->add_option("--lo-score", ev.lo_score)->capture_default_str();
    el->add_flag("--table", ev.table, "print a summary table");
    el->add_flag("--timing", ev.timing, "include pose-step wall times in the report");
    el->add_option("--scene-name", ev.scene_name)->capture_default_str();
    el->add_option("--threshold", ev.nms.threshold)->capture_default_str();
    el->add_option("--radius", ev.nms.radius)->capture_default_str();
    el->add_option("--max-count", ev.nms.max_count)->capture_default_str();
    el->add_option("--iterations", ev.ransac.iterations)->capture_default_str();
    el->add_option("--inlier-px", ev.ransac.inlier_threshold_px)->capture_default_str();

    BenchArgs bench;
    auto* bn = app.add_subcommand("bench-ransac", "pose-step runtime against correspondence count");
    add_common(bn, common);
    bn->add_option("--counts", bench.counts)->capture_default_str();
    bn->add_option("--trials", bench.trials)->capture_default_str();
    bn->add_option("--iterations", bench.ransac.iterations)->capture_default_str();
    bn->add_option("--inlier-px", bench.ransac.inlier_threshold_px)->capture_default_str();

    GradArgs grad;
    auto* gc = app.add_subcommand("grad-check", "finite-difference checks of losses and backward pass");
    add_common(gc, common);
    gc->add_option("--seeds", grad.seeds)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        if (sub == sg && synth.toy) apply_toy_preset(sg, synth.spec);
        if (sub == tr) return run_train(common, train, tr);
        print_resolved(sub);
        if (!common.config.empty() && sub != tr) {
            RegressorConfig unused;
            bool flag = false;
            apply_config_file(common.config, unused, flag);
        }
        if (sub == sg) return run_synth_gen(common, synth);
        if (sub == rd) return run_render(common, render);
        if (sub == hr) return run_heatmap_ref(common, href);
        if (sub == lc) return run_localize(common, loc);
        if (sub == el) return run_eval(common, ev);
        if (sub == bn) return run_bench(common, bench);
        if (sub == gc) return run_gradcheck(common, grad);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InsufficientKeypoints& e) {
        std::cerr << "error: insufficient keypoints (" << e.what() << ")\n";
        return kExitLocalization;
    } catch (const NoValidHypothesis& e) {
        std::cerr << "error: localization failed: " << e.what() << "\n";
        return kExitLocalization;
    } catch (const TooFewCorrespondences& e) {
        std::cerr << "error: localization failed: " << e.what() << "\n";
        return kExitLocalization;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}

#include "reloc/synthetic.hpp"

#include "reloc/errors.hpp"
#include "reloc/rng.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace reloc {

namespace {

Color hash_color(std::uint64_t seed, std::uint64_t key, std::uint64_t attempt) {
    const std::uint64_t h = splitmix64(derive_seed(seed, key) ^ (attempt * 0xA24BAED4963EE407ULL));
    return {static_cast<std::uint8_t>(h & 0xFF), static_cast<std::uint8_t>((h >> 8) & 0xFF),
            static_cast<std::uint8_t>((h >> 16) & 0xFF)};
}

std::uint32_t pack(const Color& c) { return (std::uint32_t{c[0]} << 16) | (std::uint32_t{c[1]} << 8) | c[2]; }

ScenePose look_at(const Eigen::Vector3d& C, const Eigen::Vector3d& target) {
    const Eigen::Vector3d world_up{0, 1, 0};
    const Eigen::Vector3d f = (target - C).normalized();
    const Eigen::Vector3d right = f.cross(world_up).normalized();
    const Eigen::Vector3d down = f.cross(right);
    Mat3 R;
    R.row(0) = right;
    R.row(1) = down;
    R.row(2) = f;
    return ScenePose(R, -R * C);
}

constexpr std::uint64_t kColorStreamDisc = 1;
constexpr std::uint64_t kColorStreamRep = 2;

}  // namespace

SynthSceneSpec toy_scene_spec(std::uint64_t seed) {
    SynthSceneSpec s;
    s.points_discriminative = 12;
    s.points_repetitive = 8;
    s.cameras = 8;
    s.width = 64;
    s.height = 64;
    s.splat_px = 7;
    s.seed = seed;
    return s;
}

void SynthSceneSpec::validate() const {
    if (points_discriminative < 0 || points_repetitive < 0) throw InvalidSpec("point counts must be >= 0");
    if (points_discriminative + points_repetitive < 4) throw InvalidSpec("at least 4 points required");
    if (!(box_extent > 0)) throw InvalidSpec("box extent must be positive");
    if (cameras < 1) throw InvalidSpec("at least one camera required");
    if (!(ring_radius > diameter() / 2)) throw InvalidSpec("ring radius must exceed half the box diagonal");
    if (width < 1 || height < 1) throw InvalidSpec("image size must be positive");
    if (splat_px < 1) throw InvalidSpec("splat size must be >= 1");
    if (!(pixel_noise >= 0)) throw InvalidSpec("pixel noise must be >= 0");
}

double SynthSceneSpec::diameter() const { return box_extent * std::sqrt(3.0); }

SceneModel SyntheticScene::reliable_model() const {
    SceneModel out =
        filter_points(model, [this](std::int64_t id) { return regions.at(id) == Region::discriminative; });
    for (auto& [img, obs] : out.visibility) {
        const Frame& f = model.frame(img);
        const Grid<std::int64_t> owner = render_owners(model, img, spec.splat_px);
        std::erase_if(obs, [&](const Observation& o) {
            const Pixel2 p = project(f.intrinsics, f.pose, model.points.at(o.point_id));
            return owner.at(to_cell(p.y()), to_cell(p.x())) != o.point_id;
        });
    }
    return out;
}

SyntheticScene generate_scene(const SynthSceneSpec& spec) {
    spec.validate();
    SyntheticScene scene;
    scene.spec = spec;
    Rng rng(spec.seed);
    const double h = spec.box_extent / 2;
    const int n_total = spec.points_discriminative + spec.points_repetitive;
    for (int i = 0; i < n_total; ++i) {
        const double x = rng.uniform(-h, h), y = rng.uniform(-h, h), z = rng.uniform(-h, h);
        scene.model.points.emplace(i, Point3{x, y, z});
        scene.regions.emplace(i, i < spec.points_discriminative ? Region::discriminative : Region::repetitive);
    }

    // Colors: distinct per discriminative point, shared within repetitive groups,
    // never equal to the background.
    std::set<std::uint32_t> used{pack(kBackgroundColor)};
    const auto fresh = [&](std::uint64_t stream, std::uint64_t key) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            const Color c = hash_color(spec.seed ^ stream, key, attempt);
            if (used.insert(pack(c)).second) return c;
        }
    };
    std::map<int, Color> group_colors;
    for (int i = 0; i < n_total; ++i) {
        if (i < spec.points_discriminative) {
            scene.colors.emplace(i, fresh(kColorStreamDisc, static_cast<std::uint64_t>(i)));
        } else {
            const int group = (i - spec.points_discriminative) / kRepetitiveGroupSize;
            if (!group_colors.count(group)) group_colors.emplace(group, fresh(kColorStreamRep, group));
            scene.colors.emplace(i, group_colors.at(group));
        }
    }

    // Focal length so the bounding sphere fits the shorter image side.
    const double box_radius = spec.diameter() / 2;
    const double dist = std::hypot(spec.ring_radius, spec.camera_height);
    const double half_fov = std::asin(std::min(0.999, box_radius / dist));
    const double f = 0.5 * std::min(spec.width, spec.height) / std::tan(half_fov);
    CameraIntrinsics k{f, f, spec.width / 2.0, spec.height / 2.0, spec.width, spec.height};
    for (int j = 0; j < spec.cameras; ++j) {
        const double phi = 2.0 * std::numbers::pi * j / spec.cameras;
        const Eigen::Vector3d C{spec.ring_radius * std::cos(phi), -spec.camera_height,
                                spec.ring_radius * std::sin(phi)};
        scene.model.frames.emplace(j, Frame{look_at(C, Eigen::Vector3d::Zero()), k});
    }

    for (const auto& [img, frame] : scene.model.frames) {
        auto& vis = scene.model.visibility[img];
        for (const auto& [pid, X] : scene.model.points) {
            const double nu = rng.normal() * spec.pixel_noise;
            const double nv = rng.normal() * spec.pixel_noise;
            if (!(frame.pose.to_camera(X).z() > 1e-9)) continue;
            const Pixel2 p = project(frame.intrinsics, frame.pose, X);
            const Pixel2 obs = p + Pixel2(nu, nv);
            if (in_bounds(frame.intrinsics, p) && in_bounds(frame.intrinsics, obs)) vis.push_back({pid, obs});
        }
    }
    validate(scene.model);
    return scene;
}

std::pair<int, int> splat_range(int c, int splat_px) {
    const int lo = c - splat_px / 2;
    return {lo, lo + splat_px - 1};
}

namespace {

// Z-buffered splat of every observation of a frame; `paint(row, col, obs, z)`
// is called whenever a nearer point takes over a cell.
template <typename Paint>
void splat_frame(const SceneModel& model, std::int64_t image_id, int splat_px, Paint paint) {
    const Frame& f = model.frame(image_id);
    const int W = f.intrinsics.width, H = f.intrinsics.height;
    Grid<double> depth(W, H, std::numeric_limits<double>::infinity());
    for (const auto& o : model.observations(image_id)) {
        const Point3& X = model.points.at(o.point_id);
        const double z = f.pose.to_camera(X).z();
        const Pixel2 p = project(f.intrinsics, f.pose, X);
        const auto [c0, c1] = splat_range(to_cell(p.x()), splat_px);
        const auto [r0, r1] = splat_range(to_cell(p.y()), splat_px);
        for (int r = std::max(0, r0); r <= std::min(H - 1, r1); ++r)
            for (int c = std::max(0, c0); c <= std::min(W - 1, c1); ++c) {
                if (!(z < depth.at(r, c))) continue;
                depth.at(r, c) = z;
                paint(r, c, o, z);
            }
    }
}

}  // namespace

Rendering render_image(const SceneModel& model, std::int64_t image_id, const std::map<std::int64_t, Color>& colors,
                       const std::map<std::int64_t, Region>& regions, int splat_px) {
    const Frame& f = model.frame(image_id);
    const int W = f.intrinsics.width, H = f.intrinsics.height;
    Rendering out{RgbImage(W, H), RegionLabelMap(W, H, Region::background)};
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
            for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = kBackgroundColor[ch] / 255.0;
    splat_frame(model, image_id, splat_px, [&](int r, int c, const Observation& o, double) {
        const Color& color = colors.at(o.point_id);
        for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = color[ch] / 255.0;
        out.labels.at(r, c) = regions.at(o.point_id);
    });
    return out;
}

Rendering render_image(const SyntheticScene& scene, std::int64_t image_id) {
    return render_image(scene.model, image_id, scene.colors, scene.regions, scene.spec.splat_px);
}

CoordRendering render_coords(const SceneModel& model, std::int64_t image_id, int splat_px) {
    const Frame& f = model.frame(image_id);
    const int W = f.intrinsics.width, H = f.intrinsics.height;
    CoordRendering out{CoordMap(W, H, Point3::Zero()), Grid<std::uint8_t>(W, H, 0)};
    splat_frame(model, image_id, splat_px, [&](int r, int c, const Observation&, double z) {
        out.coords.at(r, c) = backproject(f.intrinsics, f.pose, Pixel2(c, r), z);
        out.valid.at(r, c) = 1;
    });
    return out;
}

Grid<std::int64_t> render_owners(const SceneModel& model, std::int64_t image_id, int splat_px) {
    const Frame& f = model.frame(image_id);
    Grid<std::int64_t> out(f.intrinsics.width, f.intrinsics.height, -1);
    splat_frame(model, image_id, splat_px,
                [&](int r, int c, const Observation& o, double) { out.at(r, c) = o.point_id; });
    return out;
}

CorruptedCorrespondences corrupt_correspondences(const std::vector<Correspondence>& exact, double noise_px,
                                                 double outlier_fraction, const CameraIntrinsics& k,
                                                 std::uint64_t seed) {
    if (!(outlier_fraction >= 0 && outlier_fraction <= 1) || !(noise_px >= 0))
        throw std::invalid_argument("corrupt_correspondences: 0 <= rho <= 1 and sigma >= 0 required");
    Rng rng(seed);
    CorruptedCorrespondences out{exact, std::vector<bool>(exact.size(), false)};
    if (noise_px > 0)
        for (auto& c : out.corrs) {
            const double du = rng.normal() * noise_px;
            const double dv = rng.normal() * noise_px;
            c.pixel += Pixel2(du, dv);
        }
    const std::size_t n = exact.size();
    const auto n_out = static_cast<std::size_t>(std::floor(outlier_fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = 0; i < n_out; ++i) {
        const std::size_t j = i + rng.uniform_int(n - i);
        std::swap(order[i], order[j]);
        const std::size_t idx = order[i];
        out.corrs[idx].pixel = {rng.uniform(-0.5, k.width - 0.5), rng.uniform(-0.5, k.height - 0.5)};
        out.outlier[idx] = true;
    }
    return out;
}

FramePrediction plant_confidence(const SceneModel& model, std::int64_t image_id, const PlantedConfidence& params,
                                 std::uint64_t seed) {
    const Frame& f = model.frame(image_id);
    const int W = f.intrinsics.width, H = f.intrinsics.height;
    FramePrediction out{image_id, Heatmap(W, H, 0.0), CoordMap(W, H, Point3::Zero())};
    Rng rng(seed);
    std::size_t i = 0;
    for (const auto& o : model.observations(image_id)) {
        const Point3& X = model.points.at(o.point_id);
        const double z = f.pose.to_camera(X).z();
        const Pixel2 p = project(f.intrinsics, f.pose, X);
        const int col = to_cell(p.x()), row = to_cell(p.y());
        const bool reliable = (i++ % 2) == 0;
        const double conf = reliable ? rng.uniform(0.75, 1.0) : rng.uniform(params.lo_score - 0.04, params.lo_score + 0.04);
        const double sigma = params.noise_scale * (1.0 - conf);
        const Eigen::Vector3d noise{rng.normal() * sigma, rng.normal() * sigma, rng.normal() * sigma};
        if (!out.heatmap.contains(row, col) || out.heatmap.at(row, col) > 0) continue;
        out.heatmap.at(row, col) = conf;
        out.coords.at(row, col) = backproject(f.intrinsics, f.pose, Pixel2(col, row), z) + noise;
    }
    return out;
}

std::uint8_t label_gray(Region r) {
    switch (r) {
        case Region::discriminative: return 255;
        case Region::repetitive: return 128;
        default: return 0;
    }
}

void write_label_pgm(const std::filesystem::path& path, const RegionLabelMap& labels) {
    std::vector<std::uint8_t> bytes(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) bytes[i] = label_gray(labels.values[i]);
    write_pgm_bytes(path, labels.width, labels.height, bytes);
}

void save_point_table(const std::filesystem::path& path, const SyntheticScene& scene) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "# point_id region r g b   (region: 1 discriminative, 2 repetitive)\n";
    for (const auto& [id, c] : scene.colors)
        out << id << " " << static_cast<int>(scene.regions.at(id)) << " " << int{c[0]} << " " << int{c[1]} << " "
            << int{c[2]} << "\n";
}

void load_point_table(const std::filesystem::path& path, std::map<std::int64_t, Color>& colors,
                      std::map<std::int64_t, Region>& regions) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream f(line);
        long long id;
        int region, r, g, b;
        if (!(f >> id)) continue;
        if (!(f >> region >> r >> g >> b) || region < 1 || region > 2 || r < 0 || r > 255 || g < 0 || g > 255 ||
            b < 0 || b > 255)
            throw ParseError(line_no, "malformed point table record");
        colors[id] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
        regions[id] = static_cast<Region>(region);
    }
}

}  // namespace reloc

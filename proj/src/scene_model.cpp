#include "reloc/scene_model.hpp"

#include "reloc/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

namespace reloc {

bool Frame::operator==(const Frame& o) const {
    return intrinsics == o.intrinsics && pose.translation == o.pose.translation &&
           pose.rotation.coeffs() == o.pose.rotation.coeffs();
}

const Frame& SceneModel::frame(std::int64_t image_id) const {
    const auto it = frames.find(image_id);
    if (it == frames.end()) throw UnknownImage(image_id);
    return it->second;
}

std::vector<Observation> SceneModel::observations(std::int64_t image_id) const {
    frame(image_id);
    const auto it = visibility.find(image_id);
    if (it == visibility.end()) return {};
    std::vector<Observation> obs = it->second;
    std::stable_sort(obs.begin(), obs.end(),
                     [](const Observation& a, const Observation& b) { return a.point_id < b.point_id; });
    return obs;
}

bool SceneModel::operator==(const SceneModel& o) const {
    if (points != o.points || frames != o.frames) return false;
    auto nonempty = [](const auto& vis) {
        std::map<std::int64_t, std::vector<std::pair<std::int64_t, Pixel2>>> m;
        for (const auto& [img, obs] : vis) {
            if (obs.empty()) continue;
            auto& dst = m[img];
            for (const auto& ob : obs) dst.emplace_back(ob.point_id, ob.pixel);
        }
        return m;
    };
    const auto a = nonempty(visibility);
    const auto b = nonempty(o.visibility);
    if (a.size() != b.size()) return false;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.size() != ib->second.size()) return false;
        for (std::size_t i = 0; i < ia->second.size(); ++i)
            if (ia->second[i].first != ib->second[i].first || ia->second[i].second != ib->second[i].second)
                return false;
    }
    return true;
}

bool in_bounds(const CameraIntrinsics& k, const Pixel2& p) {
    return p.x() >= -0.5 && p.x() < k.width - 0.5 && p.y() >= -0.5 && p.y() < k.height - 0.5;
}

void validate(const SceneModel& model) {
    for (const auto& [id, X] : model.points)
        if (!X.allFinite()) throw ValidationError("point " + std::to_string(id) + " is not finite");
    for (const auto& [id, f] : model.frames) {
        if (!f.intrinsics.valid()) throw ValidationError("frame " + std::to_string(id) + " has invalid intrinsics");
        if (!f.pose.valid()) throw ValidationError("frame " + std::to_string(id) + " has an invalid pose");
    }
    for (const auto& [img, obs] : model.visibility) {
        const auto fit = model.frames.find(img);
        if (fit == model.frames.end())
            throw ValidationError("visibility references unknown image " + std::to_string(img));
        for (const auto& o : obs) {
            const auto pit = model.points.find(o.point_id);
            if (pit == model.points.end())
                throw ValidationError("visibility references unknown point " + std::to_string(o.point_id));
            if (!in_bounds(fit->second.intrinsics, o.pixel))
                throw ValidationError("observation of point " + std::to_string(o.point_id) + " in image " +
                                      std::to_string(img) + " is out of bounds");
            if (!(fit->second.pose.to_camera(pit->second).z() > 0))
                throw ValidationError("point " + std::to_string(o.point_id) + " has non-positive depth in image " +
                                      std::to_string(img));
        }
    }
}

namespace {

struct LineReader {
    std::istream& in;
    std::size_t line_no = 0;

    // Next non-empty line with comments stripped; false at end of input.
    bool next(std::istringstream& fields) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            fields.clear();
            fields.str(line);
            return true;
        }
        return false;
    }

    std::istringstream require(const char* what) {
        std::istringstream fields;
        if (!next(fields)) throw ParseError(line_no, std::string("unexpected end of file, expected ") + what);
        return fields;
    }

    std::size_t section(const std::string& name) {
        auto fields = require(name.c_str());
        std::string tag;
        long long n = -1;
        if (!(fields >> tag) || tag != name) throw ParseError(line_no, "expected section " + name);
        if (!(fields >> n) || n < 0) throw ParseError(line_no, "bad count for section " + name);
        expect_end(fields);
        return static_cast<std::size_t>(n);
    }

    void expect_end(std::istringstream& fields) {
        std::string extra;
        if (fields >> extra) throw ParseError(line_no, "unexpected trailing field '" + extra + "'");
    }
};

}  // namespace

SceneModel parse_scene_model(std::istream& in) {
    LineReader r{in};
    SceneModel model;
    {
        auto fields = r.require("SCENE1 header");
        std::string magic;
        fields >> magic;
        if (magic != "SCENE1") throw ParseError(r.line_no, "missing SCENE1 header");
        r.expect_end(fields);
    }
    const std::size_t n_points = r.section("POINTS");
    for (std::size_t i = 0; i < n_points; ++i) {
        auto f = r.require("point");
        long long id;
        double x, y, z;
        if (!(f >> id >> x >> y >> z)) throw ParseError(r.line_no, "malformed point record");
        r.expect_end(f);
        if (!model.points.emplace(id, Point3{x, y, z}).second)
            throw ParseError(r.line_no, "duplicate point id " + std::to_string(id));
    }
    const std::size_t n_images = r.section("IMAGES");
    for (std::size_t i = 0; i < n_images; ++i) {
        auto f = r.require("image");
        long long id;
        double qw, qx, qy, qz, tx, ty, tz;
        Frame fr;
        if (!(f >> id >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> fr.intrinsics.fx >> fr.intrinsics.fy >>
              fr.intrinsics.cx >> fr.intrinsics.cy >> fr.intrinsics.width >> fr.intrinsics.height))
            throw ParseError(r.line_no, "malformed image record");
        r.expect_end(f);
        fr.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
        fr.pose.translation = {tx, ty, tz};
        if (!model.frames.emplace(id, fr).second)
            throw ParseError(r.line_no, "duplicate image id " + std::to_string(id));
    }
    const std::size_t n_vis = r.section("VISIBILITY");
    for (std::size_t i = 0; i < n_vis; ++i) {
        auto f = r.require("visibility");
        long long img, pid;
        double u, v;
        if (!(f >> img >> pid >> u >> v)) throw ParseError(r.line_no, "malformed visibility record");
        r.expect_end(f);
        model.visibility[img].push_back({pid, {u, v}});
    }
    std::istringstream extra;
    if (r.next(extra)) throw ParseError(r.line_no, "unexpected content after VISIBILITY section");
    validate(model);
    return model;
}

SceneModel load_scene_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open " + path.string());
    return parse_scene_model(in);
}

void write_scene_model(std::ostream& out, const SceneModel& model) {
    char buf[640];
    out << "SCENE1\n";
    out << "POINTS " << model.points.size() << "\n";
    for (const auto& [id, X] : model.points) {
        std::snprintf(buf, sizeof buf, "%lld %.17g %.17g %.17g\n", static_cast<long long>(id), X.x(), X.y(), X.z());
        out << buf;
    }
    out << "IMAGES " << model.frames.size() << "\n";
    for (const auto& [id, f] : model.frames) {
        const auto& k = f.intrinsics;
        out << format_pose_line(id, f.pose);
        std::snprintf(buf, sizeof buf, " %.17g %.17g %.17g %.17g %d %d\n", k.fx, k.fy, k.cx, k.cy, k.width,
                      k.height);
        out << buf;
    }
    std::size_t n_vis = 0;
    for (const auto& [img, obs] : model.visibility) n_vis += obs.size();
    out << "VISIBILITY " << n_vis << "\n";
    for (const auto& [img, obs] : model.visibility)
        for (const auto& o : obs) {
            std::snprintf(buf, sizeof buf, "%lld %lld %.17g %.17g\n", static_cast<long long>(img),
                          static_cast<long long>(o.point_id), o.pixel.x(), o.pixel.y());
            out << buf;
        }
}

void save_scene_model(const std::filesystem::path& path, const SceneModel& model) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    write_scene_model(out, model);
}

Heatmap reference_heatmap(const SceneModel& model, std::int64_t image_id) {
    const Frame& f = model.frame(image_id);
    Heatmap h(f.intrinsics.width, f.intrinsics.height, 0.0);
    for (const auto& o : model.observations(image_id)) {
        const Pixel2 p = project(f.intrinsics, f.pose, model.points.at(o.point_id));
        const int col = to_cell(p.x()), row = to_cell(p.y());
        if (h.contains(row, col)) h.at(row, col) = 1.0;
    }
    return h;
}

std::vector<std::pair<Pixel2, Point3>> visible_observations(const SceneModel& model, std::int64_t image_id) {
    std::vector<std::pair<Pixel2, Point3>> out;
    for (const auto& o : model.observations(image_id)) out.emplace_back(o.pixel, model.points.at(o.point_id));
    return out;
}

}  // namespace reloc

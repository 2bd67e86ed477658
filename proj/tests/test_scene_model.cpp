#include "reloc/errors.hpp"
#include "reloc/scene_model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

namespace reloc {
namespace {

const char* kSample = R"(SCENE1
# two points, one camera at the origin looking down +z
POINTS 3
0 0 0 5
1 1 -0.5 4
2 0.5 0.5 10
IMAGES 2
7 1 0 0 0 0 0 0 100 100 32 24 64 48
9 1 0 0 0 0 0 1 100 100 32 24 64 48
VISIBILITY 3
7 1 57 11.5
7 0 32 24
9 2 37 28.5
)";

SceneModel sample() {
    std::istringstream in(kSample);
    return parse_scene_model(in);
}

TEST(SceneModel, ParsesSample) {
    const SceneModel m = sample();
    ASSERT_EQ(m.points.size(), 3u);
    ASSERT_EQ(m.frames.size(), 2u);
    EXPECT_EQ(m.points.at(1), Point3(1, -0.5, 4));
    EXPECT_EQ(m.frame(9).pose.translation, Eigen::Vector3d(0, 0, 1));
    EXPECT_EQ(m.frame(7).intrinsics.width, 64);
    const auto obs = m.observations(7);
    ASSERT_EQ(obs.size(), 2u);
    EXPECT_EQ(obs[0].point_id, 0);  // sorted by point id
    EXPECT_EQ(obs[1].pixel, Pixel2(57, 11.5));
    EXPECT_NO_THROW(validate(m));
}

TEST(SceneModel, WriteParseRoundTrip) {
    const SceneModel m = sample();
    std::ostringstream out;
    write_scene_model(out, m);
    std::istringstream in(out.str());
    EXPECT_TRUE(parse_scene_model(in) == m);

    const auto path = std::filesystem::temp_directory_path() / "reloc_scene_rt.scene1";
    save_scene_model(path, m);
    EXPECT_TRUE(load_scene_model(path) == m);
}

TEST(SceneModel, UnknownImage) {
    const SceneModel m = sample();
    EXPECT_THROW(m.frame(8), UnknownImage);
    EXPECT_THROW(m.observations(8), UnknownImage);
}

int parse_error_line(const std::string& text) {
    std::istringstream in(text);
    try {
        parse_scene_model(in);
    } catch (const ParseError& e) {
        return static_cast<int>(e.line);
    }
    return -1;
}

TEST(SceneModel, ParseErrorsCarryLineNumbers) {
    EXPECT_EQ(parse_error_line("SCENE2\n"), 1);
    EXPECT_EQ(parse_error_line("SCENE1\nPOINTS 1\n0 1 2\n"), 3);
    EXPECT_EQ(parse_error_line("SCENE1\nPOINTS 2\n0 1 2 3\n0 1 2 3\n"), 4);
    EXPECT_EQ(parse_error_line("SCENE1\nPOINTS 0\nIMAGES 1\n"), 3);
    EXPECT_EQ(parse_error_line("SCENE1\nPOINTS -1\n"), 2);
    EXPECT_EQ(parse_error_line("SCENE1\nPOINTS 0\nIMAGES 0\nVISIBILITY 0\ntrailing\n"), 5);
}

TEST(SceneModel, ValidateCatchesInconsistencies) {
    SceneModel m = sample();
    m.visibility[7].push_back({42, Pixel2(1, 1)});
    EXPECT_THROW(validate(m), ValidationError);

    m = sample();
    m.visibility[7].push_back({1, Pixel2(64.0, 3)});  // past the right edge
    EXPECT_THROW(validate(m), ValidationError);

    m = sample();
    m.points[0] = Point3(0, 0, -5);
    EXPECT_THROW(validate(m), ValidationError);

    m = sample();
    m.visibility[3].push_back({0, Pixel2(1, 1)});
    EXPECT_THROW(validate(m), ValidationError);
}

TEST(SceneModel, InBoundsUsesCellCenters) {
    const CameraIntrinsics k{1, 1, 0, 0, 4, 3};
    EXPECT_TRUE(in_bounds(k, Pixel2(-0.5, -0.5)));
    EXPECT_TRUE(in_bounds(k, Pixel2(3.49, 2.49)));
    EXPECT_FALSE(in_bounds(k, Pixel2(3.5, 0)));
    EXPECT_FALSE(in_bounds(k, Pixel2(0, -0.51)));
}

TEST(SceneModel, ReferenceHeatmapMarksRoundedProjections) {
    const SceneModel m = sample();
    const Heatmap h = reference_heatmap(m, 7);
    ASSERT_EQ(h.width, 64);
    ASSERT_EQ(h.height, 48);
    // point 0 projects to (32, 24); point 1 to (57, 11.5) -> cell (row 12, col 57)
    EXPECT_EQ(h.at(24, 32), 1.0);
    EXPECT_EQ(h.at(12, 57), 1.0);
    double sum = 0;
    for (double v : h.values) sum += v;
    EXPECT_EQ(sum, 2.0);
}

TEST(SceneModel, ReferenceHeatmapOfEmptyFrameIsZero) {
    SceneModel m = sample();
    m.visibility.erase(9);
    const Heatmap h = reference_heatmap(m, 9);
    for (double v : h.values) ASSERT_EQ(v, 0.0);
}

TEST(SceneModel, VisibleObservationsAndFilter) {
    const SceneModel m = sample();
    const auto vis = visible_observations(m, 7);
    ASSERT_EQ(vis.size(), 2u);
    EXPECT_EQ(vis[0].second, m.points.at(0));
    const SceneModel f = filter_points(m, [](std::int64_t id) { return id != 0; });
    EXPECT_EQ(f.points.count(0), 0u);
    EXPECT_EQ(f.observations(7).size(), 1u);
    EXPECT_EQ(f.frames.size(), 2u);
}

}  // namespace
}  // namespace reloc

#include "reloc/errors.hpp"
#include "reloc/keypoints.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

namespace reloc {
namespace {

// Brute force: a cell survives when no other cell of its window is preferred
// under (value desc, row, col asc).
std::vector<Keypoint> brute_force_nms(const Heatmap& h, int r, double thr, int max_count) {
    std::vector<Keypoint> out;
    for (int y = 0; y < h.height; ++y)
        for (int x = 0; x < h.width; ++x) {
            const double v = h.at(y, x);
            if (v < thr) continue;
            bool best = true;
            for (int yy = y - r; yy <= y + r && best; ++yy)
                for (int xx = x - r; xx <= x + r && best; ++xx) {
                    if (!h.contains(yy, xx) || (yy == y && xx == x)) continue;
                    const double w = h.at(yy, xx);
                    if (w > v || (w == v && (yy < y || (yy == y && xx < x)))) best = false;
                }
            if (best) out.push_back({Pixel2(x, y), v});
        }
    std::stable_sort(out.begin(), out.end(),
                     [](const Keypoint& a, const Keypoint& b) { return a.confidence > b.confidence; });
    if (out.size() > static_cast<std::size_t>(max_count)) out.resize(max_count);
    return out;
}

Heatmap random_heatmap(std::mt19937_64& gen, int w, int h, int levels) {
    std::uniform_int_distribution<int> d(0, levels);
    Heatmap m(w, h, 0.0);
    for (double& v : m.values) v = d(gen) / static_cast<double>(levels);
    return m;
}

TEST(Keypoints, NmsMatchesBruteForce) {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 60; ++trial) {
        const int w = 5 + trial % 17, h = 4 + trial % 13, r = 1 + trial % 5;
        // few levels so ties are common
        const Heatmap m = random_heatmap(gen, w, h, trial % 2 ? 4 : 1000);
        const double thr = (trial % 3) * 0.3;
        const auto got = nms_select(m, r, thr, 1000);
        const auto want = brute_force_nms(m, r, thr, 1000);
        ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].pixel, want[i].pixel);
            EXPECT_EQ(got[i].confidence, want[i].confidence);
        }
    }
}

TEST(Keypoints, PlateauKeepsFirstCell) {
    Heatmap m(6, 6, 0.9);
    const auto kps = nms_select(m, 2, 0.7, 100);
    // every other cell has an equal, earlier neighbour in its window
    ASSERT_EQ(kps.size(), 1u);
    EXPECT_EQ(kps[0].pixel, Pixel2(0, 0));
}

TEST(Keypoints, ThresholdAndBudget) {
    Heatmap m(20, 1, 0.0);
    for (int i = 0; i < 20; i += 2) m.at(0, i) = 0.5 + i * 0.02;
    EXPECT_TRUE(nms_select(m, 1, 0.95, 10).empty());
    const auto kps = nms_select(m, 1, 0.6, 3);
    ASSERT_EQ(kps.size(), 3u);
    EXPECT_EQ(kps[0].pixel.x(), 18);
    EXPECT_EQ(kps[2].pixel.x(), 14);
    for (const auto& k : nms_select(m, 1, 0.6, 100)) EXPECT_GE(k.confidence, 0.6);
}

TEST(Keypoints, SinglePeakSurvives) {
    Heatmap m(9, 9, 0.1);
    m.at(4, 6) = 0.8;
    const auto kps = nms_select(m, NmsParams{});
    ASSERT_EQ(kps.size(), 1u);
    EXPECT_EQ(kps[0].pixel, Pixel2(6, 4));
}

TEST(Keypoints, RejectsBadParameters) {
    Heatmap m(4, 4, 0.0);
    EXPECT_THROW(nms_select(m, 0, 0.5, 10), std::invalid_argument);
    EXPECT_THROW(nms_select(m, 1, 1.5, 10), std::invalid_argument);
    EXPECT_THROW(nms_select(m, 1, 0.5, 0), std::invalid_argument);
}

TEST(Keypoints, GatherLooksUpCells) {
    CoordMap c(3, 2, Point3::Zero());
    c.at(1, 2) = Point3(1, 2, 3);
    const auto corrs = gather_correspondences({{Pixel2(2, 1), 0.8}}, c);
    ASSERT_EQ(corrs.size(), 1u);
    EXPECT_EQ(corrs[0].world, Point3(1, 2, 3));
    EXPECT_EQ(corrs[0].confidence, 0.8);
    EXPECT_THROW(gather_correspondences({{Pixel2(3, 0), 0.8}}, c), OutOfBounds);
}

TEST(Keypoints, SplitByConfidenceIsDisjointAndBanded) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0, 1);
    Heatmap m(80, 80, 0.0);
    CoordMap c(80, 80, Point3::Zero());
    for (int y = 0; y < 80; y += 5)
        for (int x = 0; x < 80; x += 5) {
            m.at(y, x) = (x / 5 + y / 5) % 2 ? 0.75 + 0.25 * u(gen) : 0.36 + 0.08 * u(gen);
            c.at(y, x) = Point3(x, y, 1);
        }
    const ConfidenceSplit s = split_by_confidence(m, c, 0.7, 0.4, 50);
    ASSERT_EQ(s.high.size(), 50u);
    ASSERT_EQ(s.low.size(), 50u);
    std::set<std::pair<double, double>> hi;
    for (const auto& h : s.high) {
        EXPECT_GE(h.confidence, 0.7);
        hi.insert({h.pixel.x(), h.pixel.y()});
    }
    for (std::size_t i = 0; i < s.low.size(); ++i) {
        EXPECT_NEAR(s.low[i].confidence, 0.4, kLowBandHalfWidth);
        EXPECT_EQ(hi.count({s.low[i].pixel.x(), s.low[i].pixel.y()}), 0u);
        if (i) {
            EXPECT_LE(std::abs(s.low[i - 1].confidence - 0.4), std::abs(s.low[i].confidence - 0.4));
        }
    }
    for (std::size_t i = 1; i < s.high.size(); ++i) EXPECT_GE(s.high[i - 1].confidence, s.high[i].confidence);

    try {
        split_by_confidence(m, c, 0.7, 0.4, 200);
        FAIL() << "expected InsufficientKeypoints";
    } catch (const InsufficientKeypoints& e) {
        EXPECT_EQ(e.which_set, "hi");
        EXPECT_EQ(e.found, 128u);
    }
}

TEST(Keypoints, CsvExport) {
    const auto path = std::filesystem::temp_directory_path() / "reloc_kps.csv";
    write_keypoints_csv(path, {{Pixel2(3, 4), 0.75}, {Pixel2(0, 1), 1.0}});
    std::ifstream in(path);
    std::string a, b, c;
    std::getline(in, a);
    std::getline(in, b);
    std::getline(in, c);
    EXPECT_EQ(a, "u,v,confidence");
    EXPECT_EQ(b, "3,4,0.75");
    EXPECT_EQ(c, "0,1,1");
}

}  // namespace
}  // namespace reloc

#include "reloc/errors.hpp"
#include "reloc/image.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace reloc {
namespace {

std::filesystem::path tmp(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "reloc_test_image";
    std::filesystem::create_directories(dir);
    return dir / name;
}

TEST(Image, PgmRoundTripQuantizes) {
    Heatmap h(5, 3, 0.0);
    for (std::size_t i = 0; i < h.size(); ++i) h.values[i] = static_cast<double>(i) / 14.0;
    write_pgm(tmp("h.pgm"), h);
    const Heatmap r = read_pgm(tmp("h.pgm"));
    ASSERT_EQ(r.width, 5);
    ASSERT_EQ(r.height, 3);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(r.values[i], h.values[i], 0.5 / 255 + 1e-12);
    // a second round trip is exact
    write_pgm(tmp("h2.pgm"), r);
    EXPECT_EQ(read_pgm(tmp("h2.pgm")).values, r.values);
}

TEST(Image, PgmClampsOutOfRangeValues) {
    Heatmap h(2, 1, 0.0);
    h.values = {-1.0, 2.0};
    write_pgm(tmp("c.pgm"), h);
    const Heatmap r = read_pgm(tmp("c.pgm"));
    EXPECT_EQ(r.values[0], 0.0);
    EXPECT_EQ(r.values[1], 1.0);
}

TEST(Image, PpmRoundTrip) {
    RgbImage img(4, 2);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 256) / 255.0;
    write_ppm(tmp("i.ppm"), img);
    EXPECT_TRUE(read_ppm(tmp("i.ppm")) == img);
}

TEST(Image, RejectsMalformedFiles) {
    std::ofstream(tmp("bad.pgm")) << "P2\n1 1\n255\n0\n";
    EXPECT_THROW(read_pgm(tmp("bad.pgm")), ParseError);
    std::ofstream(tmp("short.pgm"), std::ios::binary) << "P5\n4 4\n255\n" << "ab";
    EXPECT_THROW(read_pgm(tmp("short.pgm")), ParseError);
    EXPECT_THROW(read_ppm(tmp("missing.ppm")), ParseError);
}

TEST(Image, GridIndexing) {
    Grid<int> g(3, 2, 0);
    g.at(1, 2) = 7;
    EXPECT_EQ(g.values[5], 7);
    EXPECT_TRUE(g.contains(1, 2));
    EXPECT_FALSE(g.contains(2, 0));
    EXPECT_FALSE(g.contains(0, -1));
}

}  // namespace
}  // namespace reloc

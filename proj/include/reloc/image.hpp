#pragma once

#include "reloc/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace reloc {

/// Row-major H x W grid.
template <typename T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> values;

    Grid() = default;
    Grid(int w, int h, const T& fill = T{}) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    T& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
    const T& at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
    bool contains(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }
    std::size_t size() const { return values.size(); }
};

/// Per-pixel confidence in [0, 1].
using Heatmap = Grid<double>;
/// Per-pixel world coordinates.
using CoordMap = Grid<Point3>;

/// Interleaved RGB, channel values in [0, 1].
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // (row * width + col) * 3 + channel

    RgbImage() = default;
    RgbImage(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int row, int col, int ch) { return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
    double at(int row, int col, int ch) const { return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
};

bool operator==(const RgbImage& a, const RgbImage& b);

// Binary PGM/PPM, maxval 255. Gray/channel value = round(255 * v), clamped.
void write_pgm(const std::filesystem::path& path, const Heatmap& h);
void write_pgm_bytes(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& bytes);
Heatmap read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);

}  // namespace reloc

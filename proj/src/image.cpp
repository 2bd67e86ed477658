#include "reloc/image.hpp"

#include "reloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace reloc {

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * v), 0L, 255L));
}

// Reads whitespace-separated header tokens, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

std::vector<std::uint8_t> read_netpbm(const std::filesystem::path& path, const std::string& magic, int channels,
                                      int& width, int& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(0, "cannot open " + path.string());
    if (next_token(in) != magic) throw ParseError(1, "expected " + magic + " header in " + path.string());
    try {
        width = std::stoi(next_token(in));
        height = std::stoi(next_token(in));
        if (std::stoi(next_token(in)) != 255) throw ParseError(1, "maxval must be 255");
    } catch (const std::logic_error&) {
        throw ParseError(1, "malformed header in " + path.string());
    }
    if (width <= 0 || height <= 0) throw ParseError(1, "bad image size");
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError(2, "truncated pixel data");
    return bytes;
}

void write_netpbm(const std::filesystem::path& path, const std::string& magic, int width, int height,
                  const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << magic << "\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

bool operator==(const RgbImage& a, const RgbImage& b) {
    return a.width == b.width && a.height == b.height && a.data == b.data;
}

void write_pgm(const std::filesystem::path& path, const Heatmap& h) {
    std::vector<std::uint8_t> bytes(h.size());
    std::transform(h.values.begin(), h.values.end(), bytes.begin(), to_byte);
    write_netpbm(path, "P5", h.width, h.height, bytes);
}

void write_pgm_bytes(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& bytes) {
    write_netpbm(path, "P5", width, height, bytes);
}

Heatmap read_pgm(const std::filesystem::path& path) {
    int w = 0, h = 0;
    const auto bytes = read_netpbm(path, "P5", 1, w, h);
    Heatmap out(w, h);
    for (std::size_t i = 0; i < bytes.size(); ++i) out.values[i] = bytes[i] / 255.0;
    return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    std::vector<std::uint8_t> bytes(img.data.size());
    std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
    write_netpbm(path, "P6", img.width, img.height, bytes);
}

RgbImage read_ppm(const std::filesystem::path& path) {
    int w = 0, h = 0;
    const auto bytes = read_netpbm(path, "P6", 3, w, h);
    RgbImage out(w, h);
    for (std::size_t i = 0; i < bytes.size(); ++i) out.data[i] = bytes[i] / 255.0;
    return out;
}

}  // namespace reloc

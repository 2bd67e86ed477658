#include "reloc/keypoints.hpp"

#include "reloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace reloc {

namespace {

// Total order used for suppression: higher value wins, then lower linear index.
struct Ranker {
    const std::vector<double>& v;
    bool beats(std::size_t a, std::size_t b) const { return v[a] > v[b] || (v[a] == v[b] && a < b); }
};

// Index of the winning cell of every (2r+1)-wide window along one axis,
// first along rows, then along columns of the row-pass result.
std::vector<std::size_t> window_argmax(const Heatmap& h, int r) {
    const int W = h.width, H = h.height;
    const Ranker rank{h.values};
    std::vector<std::size_t> rows(h.size());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            std::size_t best = static_cast<std::size_t>(y) * W + std::max(0, x - r);
            for (int xx = std::max(0, x - r) + 1; xx <= std::min(W - 1, x + r); ++xx) {
                const std::size_t c = static_cast<std::size_t>(y) * W + xx;
                if (rank.beats(c, best)) best = c;
            }
            rows[static_cast<std::size_t>(y) * W + x] = best;
        }
    std::vector<std::size_t> out(h.size());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            std::size_t best = rows[static_cast<std::size_t>(std::max(0, y - r)) * W + x];
            for (int yy = std::max(0, y - r) + 1; yy <= std::min(H - 1, y + r); ++yy) {
                const std::size_t c = rows[static_cast<std::size_t>(yy) * W + x];
                if (rank.beats(c, best)) best = c;
            }
            out[static_cast<std::size_t>(y) * W + x] = best;
        }
    return out;
}

bool by_confidence(const Keypoint& a, const Keypoint& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.pixel.y() != b.pixel.y()) return a.pixel.y() < b.pixel.y();
    return a.pixel.x() < b.pixel.x();
}

std::vector<Keypoint> local_maxima(const Heatmap& h, int radius, double threshold) {
    std::vector<Keypoint> out;
    if (h.size() == 0) return out;
    const auto winner = window_argmax(h, radius);
    for (std::size_t i = 0; i < h.size(); ++i)
        if (winner[i] == i && h.values[i] >= threshold)
            out.push_back({Pixel2(static_cast<double>(i % h.width), static_cast<double>(i / h.width)),
                           h.values[i]});
    std::sort(out.begin(), out.end(), by_confidence);
    return out;
}

}  // namespace

std::vector<Keypoint> nms_select(const Heatmap& h, int radius, double threshold, int max_count) {
    if (radius < 1 || threshold < 0 || threshold > 1 || max_count < 1)
        throw std::invalid_argument("nms_select: radius >= 1, threshold in [0,1], max_count >= 1 required");
    auto kps = local_maxima(h, radius, threshold);
    if (kps.size() > static_cast<std::size_t>(max_count)) kps.resize(static_cast<std::size_t>(max_count));
    return kps;
}

std::vector<Correspondence> gather_correspondences(const std::vector<Keypoint>& kps, const CoordMap& coords) {
    std::vector<Correspondence> out;
    out.reserve(kps.size());
    for (const auto& kp : kps) {
        const int col = to_cell(kp.pixel.x()), row = to_cell(kp.pixel.y());
        if (!coords.contains(row, col))
            throw OutOfBounds("keypoint (" + std::to_string(col) + ", " + std::to_string(row) +
                              ") outside coordinate map");
        out.push_back({kp.pixel, coords.at(row, col), kp.confidence});
    }
    return out;
}

ConfidenceSplit split_by_confidence(const Heatmap& h, const CoordMap& coords, double hi_thresh, double lo_score,
                                    int count, int radius) {
    if (!(hi_thresh > lo_score) || count < 4)
        throw std::invalid_argument("split_by_confidence: hi_thresh > lo_score and count >= 4 required");
    const double band_lo = std::max(0.0, lo_score - kLowBandHalfWidth);
    const double band_hi = lo_score + kLowBandHalfWidth;
    const auto maxima = local_maxima(h, radius, band_lo);

    std::vector<Keypoint> hi, lo;
    for (const auto& kp : maxima) {
        if (kp.confidence >= hi_thresh)
            hi.push_back(kp);
        else if (kp.confidence <= band_hi)
            lo.push_back(kp);
    }
    if (hi.size() < static_cast<std::size_t>(count)) throw InsufficientKeypoints("hi", hi.size());
    if (lo.size() < static_cast<std::size_t>(count)) throw InsufficientKeypoints("lo", lo.size());
    hi.resize(static_cast<std::size_t>(count));
    std::stable_sort(lo.begin(), lo.end(), [lo_score](const Keypoint& a, const Keypoint& b) {
        return std::abs(a.confidence - lo_score) < std::abs(b.confidence - lo_score);
    });
    lo.resize(static_cast<std::size_t>(count));
    return {gather_correspondences(hi, coords), gather_correspondences(lo, coords)};
}

void write_keypoints_csv(const std::filesystem::path& path, const std::vector<Keypoint>& kps) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "u,v,confidence\n";
    char buf[128];
    for (const auto& kp : kps) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", to_cell(kp.pixel.x()), to_cell(kp.pixel.y()), kp.confidence);
        out << buf;
    }
}

}  // namespace reloc

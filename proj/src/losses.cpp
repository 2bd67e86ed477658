#include "reloc/losses.hpp"

#include "reloc/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace reloc {

namespace {

constexpr double kNormFloor = 1e-12;

}  // namespace

bool LossWeights::valid() const {
    return lambda_sim >= 0 && lambda_rep >= 0 && lambda_3d >= 0 && (lambda_sim + lambda_rep + lambda_3d) > 0;
}

HeatmapLoss loss_sim(const Heatmap& pred, const Heatmap& target, int patch) {
    if (pred.width != target.width || pred.height != target.height)
        throw DimensionMismatch("loss_sim: prediction and target sizes differ");
    if (patch < 2) throw std::invalid_argument("loss_sim: patch size must be >= 2");
    HeatmapLoss out{0.0, Heatmap(pred.width, pred.height, 0.0)};
    const int tiles_x = pred.width / patch, tiles_y = pred.height / patch;
    const int n_tiles = tiles_x * tiles_y;
    if (n_tiles == 0) throw DimensionMismatch("loss_sim: heatmap smaller than one patch");

    double cos_sum = 0.0;
    for (int ty = 0; ty < tiles_y; ++ty)
        for (int tx = 0; tx < tiles_x; ++tx) {
            const int y0 = ty * patch, x0 = tx * patch;
            double ab = 0.0, aa = 0.0, bb = 0.0;
            for (int y = y0; y < y0 + patch; ++y)
                for (int x = x0; x < x0 + patch; ++x) {
                    const double a = pred.at(y, x), b = target.at(y, x);
                    ab += a * b;
                    aa += a * a;
                    bb += b * b;
                }
            if (aa == 0.0 || bb == 0.0) {
                cos_sum += (aa == 0.0 && bb == 0.0) ? 1.0 : 0.0;
                continue;
            }
            const double na = std::sqrt(aa), nb = std::sqrt(bb);
            const double cosim = ab / (na * nb);
            cos_sum += cosim;
            // d cos / d a = b / (|a||b|) - cos * a / |a|^2, scaled by -1/|P|.
            for (int y = y0; y < y0 + patch; ++y)
                for (int x = x0; x < x0 + patch; ++x)
                    out.grad.at(y, x) = -(target.at(y, x) / (na * nb) - cosim * pred.at(y, x) / aa) / n_tiles;
        }
    out.loss = 1.0 - cos_sum / n_tiles;
    return out;
}

PointLoss loss_rep(const std::vector<Point3>& coords, const std::vector<Pixel2>& pixels, const CameraIntrinsics& k,
                   const ScenePose& gt) {
    if (coords.size() != pixels.size()) throw DimensionMismatch("loss_rep: coordinate and pixel counts differ");
    if (coords.empty()) throw DimensionMismatch("loss_rep: empty batch");
    const double M = static_cast<double>(coords.size());
    const Mat3 R = gt.R();
    PointLoss out{0.0, std::vector<Eigen::Vector3d>(coords.size(), Eigen::Vector3d::Zero())};
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const Point3 Xc = R * coords[i] + gt.translation;
        if (!(Xc.z() > kRepDepthMin)) throw BehindCamera(i);
        const double iz = 1.0 / Xc.z();
        const Pixel2 proj{k.fx * Xc.x() * iz + k.cx, k.fy * Xc.y() * iz + k.cy};
        const Eigen::Vector2d r = pixels[i] - proj;
        const double n = r.norm();
        out.loss += n;
        if (n < kNormFloor) continue;
        Eigen::Matrix<double, 2, 3> J;  // d proj / d Xc
        J << k.fx * iz, 0, -k.fx * Xc.x() * iz * iz, 0, k.fy * iz, -k.fy * Xc.y() * iz * iz;
        // d |r| / d X = -(r / |r|)^T J R
        out.grads[i] = -(R.transpose() * (J.transpose() * (r / n))) / M;
    }
    out.loss /= M;
    return out;
}

PointLoss loss_3d(const std::vector<Point3>& pred, const std::vector<Point3>& gt) {
    if (pred.size() != gt.size()) throw DimensionMismatch("loss_3d: prediction and reference counts differ");
    if (pred.empty()) throw DimensionMismatch("loss_3d: empty batch");
    const double M = static_cast<double>(pred.size());
    PointLoss out{0.0, std::vector<Eigen::Vector3d>(pred.size(), Eigen::Vector3d::Zero())};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const Eigen::Vector3d d = pred[i] - gt[i];
        const double n = d.norm();
        out.loss += n;
        if (n >= kNormFloor) out.grads[i] = d / (M * n);
    }
    out.loss /= M;
    return out;
}

double loss_all(double sim, double rep, double l3d, const LossWeights& w) {
    return w.lambda_sim * sim + w.lambda_rep * rep + w.lambda_3d * l3d;
}

}  // namespace reloc

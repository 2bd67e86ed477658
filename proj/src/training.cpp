#include "reloc/training.hpp"

#include "reloc/errors.hpp"
#include "reloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace reloc {

void TrainConfig::validate() const {
    if (stage1_iters < 0 || stage2_iters < 0) throw std::invalid_argument("iteration counts must be >= 0");
    if (!(adam.lr > 0)) throw std::invalid_argument("learning rate must be > 0");
    if (!(adam.beta1 > 0 && adam.beta1 < 1 && adam.beta2 > 0 && adam.beta2 < 1))
        throw std::invalid_argument("Adam betas must lie in (0, 1)");
    if (!weights.valid()) throw std::invalid_argument("loss weights must be >= 0 and not all zero");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(scale_min > 0 && scale_min <= scale_max)) throw std::invalid_argument("bad scale range");
}

std::vector<TrainSample> build_dataset(const SceneModel& model, const std::map<std::int64_t, RgbImage>& images) {
    std::vector<TrainSample> out;
    for (const auto& [id, frame] : model.frames) {
        const auto it = images.find(id);
        if (it == images.end()) continue;
        if (it->second.width != frame.intrinsics.width || it->second.height != frame.intrinsics.height)
            throw DimensionMismatch("frame " + std::to_string(id) + " image size differs from its intrinsics");
        TrainSample s;
        s.image = it->second;
        s.reference = reference_heatmap(model, id);
        s.keypoints = visible_observations(model, id);
        s.pose = frame.pose;
        s.intrinsics = frame.intrinsics;
        out.push_back(std::move(s));
    }
    if (out.empty()) throw EmptyDataset();
    return out;
}

void fit_coord_normalization(RegressorConfig& cfg, const SceneModel& model) {
    if (model.points.empty()) return;
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& [id, p] : model.points) c += p;
    c /= static_cast<double>(model.points.size());
    double ss = 0.0;
    for (const auto& [id, p] : model.points) ss += (p - c).squaredNorm();
    const double rms = std::sqrt(ss / static_cast<double>(model.points.size()));
    cfg.coord_center = c;
    if (rms > 0) cfg.coord_scale = rms;
}

TrainSample augment_sample(const TrainSample& s, const Augmentation& a, double pad_value) {
    TrainSample out;
    const int W = s.image.width, H = s.image.height;
    const CameraIntrinsics& k = s.intrinsics;
    // Scale around the origin, then crop back to W x H so the principal point stays put.
    out.intrinsics = scale_intrinsics(k, a.scale);
    out.intrinsics.cx = k.cx;
    out.intrinsics.cy = k.cy;
    out.intrinsics.width = W;
    out.intrinsics.height = H;
    out.pose = compose_inplane_rotation(s.pose, a.rotation_deg);

    const double th = a.rotation_deg * std::acos(-1.0) / 180.0;
    const double c = std::cos(th), sn = std::sin(th);
    const Pixel2 pp{k.cx, k.cy};
    out.image = RgbImage(W, H);
    for (int r = 0; r < H; ++r)
        for (int col = 0; col < W; ++col) {
            // inverse map: p = c + Rot(-theta) (p' - c) / s
            const double dx = (col - pp.x()) / a.scale, dy = (r - pp.y()) / a.scale;
            const int sc = to_cell(pp.x() + c * dx + sn * dy);
            const int sr = to_cell(pp.y() - sn * dx + c * dy);
            const bool inside = sr >= 0 && sr < H && sc >= 0 && sc < W;
            for (int ch = 0; ch < 3; ++ch)
                out.image.at(r, col, ch) =
                    std::clamp((inside ? s.image.at(sr, sc, ch) : pad_value) * a.jitter[ch], 0.0, 1.0);
        }

    out.reference = Heatmap(W, H, 0.0);
    for (const auto& [p, X] : s.keypoints) {
        const Eigen::Vector2d d = (p - pp) * a.scale;
        const Pixel2 q = pp + Eigen::Vector2d(c * d.x() - sn * d.y(), sn * d.x() + c * d.y());
        const int row = to_cell(q.y()), col = to_cell(q.x());
        if (!out.reference.contains(row, col)) continue;
        out.reference.at(row, col) = 1.0;
        out.keypoints.emplace_back(q, X);
    }
    return out;
}

namespace {

struct SampleLoss {
    double sim = 0, rep = 0, l3d = 0;
};

// Losses of one sample; accumulates scaled parameter gradients into `grads`.
SampleLoss sample_step(Regressor& model, const TrainSample& s, const TrainConfig& tc, int stage, double scale,
                       std::vector<double>& grads) {
    const bool stage2 = stage == 2;
    const RegressorOutput out = model.forward(s.image, stage2);
    SampleLoss L;
    CoordMap g_coords(s.image.width, s.image.height, Point3::Zero());
    bool any_coord_grad = false;

    std::vector<Point3> pred, gt;
    std::vector<Pixel2> px;
    std::vector<std::pair<int, int>> cells;
    for (const auto& [p, X] : s.keypoints) {
        const int row = to_cell(p.y()), col = to_cell(p.x());
        if (!out.coords.contains(row, col)) continue;
        pred.push_back(out.coords.at(row, col));
        gt.push_back(X);
        px.push_back(p);
        cells.emplace_back(row, col);
    }
    if (!pred.empty()) {
        const PointLoss l3 = loss_3d(pred, gt);
        L.l3d = l3.loss;
        const double w3 = stage2 ? tc.weights.lambda_3d : 1.0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            g_coords.at(cells[i].first, cells[i].second) += scale * w3 * l3.grads[i];
        any_coord_grad = true;
        if (stage2) {
            // Predictions behind the depth floor are left out of L_rep.
            std::vector<Point3> rp;
            std::vector<Pixel2> rpx;
            std::vector<std::size_t> idx;
            const Mat3 R = s.pose.R();
            for (std::size_t i = 0; i < pred.size(); ++i)
                if ((R * pred[i] + s.pose.translation).z() > kRepDepthMin) {
                    rp.push_back(pred[i]);
                    rpx.push_back(px[i]);
                    idx.push_back(i);
                }
            if (!rp.empty()) {
                const PointLoss lr = loss_rep(rp, rpx, s.intrinsics, s.pose);
                L.rep = lr.loss;
                for (std::size_t i = 0; i < rp.size(); ++i)
                    g_coords.at(cells[idx[i]].first, cells[idx[i]].second) +=
                        scale * tc.weights.lambda_rep * lr.grads[i];
            }
        }
    }
    Heatmap g_heat;
    if (stage2) {
        HeatmapLoss ls = loss_sim(out.heatmap, s.reference, tc.patch_size);
        L.sim = ls.loss;
        for (auto& g : ls.grad.values) g *= scale * tc.weights.lambda_sim;
        g_heat = std::move(ls.grad);
    }
    const auto g = model.backward(s.image, stage2 ? &g_heat : nullptr, any_coord_grad ? &g_coords : nullptr);
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += g[i];
    return L;
}

}  // namespace

TrainLog train_staged(Regressor& model, const std::vector<TrainSample>& dataset, const TrainConfig& tc,
                      TrainState& state, std::uint64_t stop_after) {
    if (dataset.empty()) throw EmptyDataset();
    tc.validate();
    for (const auto& s : dataset)
        if (s.image.width != model.config().input_width || s.image.height != model.config().input_height)
            throw ShapeMismatch("training image size does not match the regressor input");
    TrainLog log;
    const std::uint64_t total = static_cast<std::uint64_t>(tc.stage1_iters) + tc.stage2_iters;
    auto& params = model.params();
    std::vector<double> grads(params.size());
    const double inv_batch = 1.0 / tc.batch_size;

    for (; state.iteration < total && state.iteration < stop_after; ++state.iteration) {
        const std::uint64_t it = state.iteration;
        const int stage = it < static_cast<std::uint64_t>(tc.stage1_iters) ? 1 : 2;
        Rng rng(derive_seed(tc.seed, it));
        std::fill(grads.begin(), grads.end(), 0.0);
        SampleLoss sum;
        for (int b = 0; b < tc.batch_size; ++b) {
            const auto& src = dataset[rng.uniform_int(dataset.size())];
            Augmentation a;
            a.scale = std::exp(rng.uniform(std::log(tc.scale_min), std::log(tc.scale_max)));
            a.rotation_deg = rng.uniform(-tc.rotation_deg, tc.rotation_deg);
            for (auto& j : a.jitter) j = rng.uniform(1.0 - tc.color_jitter, 1.0 + tc.color_jitter);
            const SampleLoss L = tc.augment ? sample_step(model, augment_sample(src, a, tc.pad_value), tc, stage,
                                                          inv_batch, grads)
                                            : sample_step(model, src, tc, stage, inv_batch, grads);
            sum.sim += L.sim * inv_batch;
            sum.rep += L.rep * inv_batch;
            sum.l3d += L.l3d * inv_batch;
        }
        const auto step = [&](ParamRange r, AdamState& st) {
            adam_step(std::span<double>(params.data() + r.begin, r.size()),
                      std::span<const double>(grads.data() + r.begin, r.size()), st, tc.adam);
        };
        step(model.encoder_params(), state.encoder);
        step(model.coord_params(), state.coord);
        if (stage == 2) step(model.heatmap_params(), state.heatmap);

        TrainLogEntry e{it, stage, sum.sim, sum.rep, sum.l3d, 0.0};
        e.l_all = stage == 2 ? loss_all(sum.sim, sum.rep, sum.l3d, tc.weights) : sum.l3d;
        log.entries.push_back(e);
    }
    return log;
}

TrainLog train_staged(Regressor& model, const std::vector<TrainSample>& dataset, const TrainConfig& tc) {
    TrainState state;
    return train_staged(model, dataset, tc, state);
}

void write_loss_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "iteration,stage,l_sim,l_rep,l_3d,l_all\n";
    char buf[256];
    for (const auto& e : log.entries) {
        std::snprintf(buf, sizeof buf, "%llu,%d,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<unsigned long long>(e.iteration), e.stage, e.l_sim, e.l_rep, e.l_3d, e.l_all);
        out << buf;
    }
}

}  // namespace reloc

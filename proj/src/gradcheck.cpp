#include "reloc/gradcheck.hpp"

#include "reloc/errors.hpp"
#include "reloc/losses.hpp"
#include "reloc/rng.hpp"

#include <algorithm>
#include <cmath>

namespace reloc {

double relative_error(double analytic, double numeric, double floor) {
    const double d = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / d;
}

namespace {

Heatmap random_heatmap(Rng& rng, int w, int h) {
    Heatmap m(w, h);
    for (double& v : m.values) v = rng.uniform(0.05, 1.0);
    return m;
}

}  // namespace

GradCheckResult check_loss_sim(std::uint64_t seed) {
    GradCheckResult r{"loss_sim", 0.0, 1e-4, 0, 0};
    Rng rng(seed);
    Heatmap pred = random_heatmap(rng, 16, 16);
    const Heatmap target = random_heatmap(rng, 16, 16);
    const HeatmapLoss l = loss_sim(pred, target, 8);
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double v = pred.values[i];
        pred.values[i] = v + kFdStep;
        const double fp = loss_sim(pred, target, 8).loss;
        pred.values[i] = v - kFdStep;
        const double fm = loss_sim(pred, target, 8).loss;
        pred.values[i] = v;
        r.max_rel_error = std::max(r.max_rel_error, relative_error(l.grad.values[i], (fp - fm) / (2 * kFdStep)));
        ++r.entries;
    }
    return r;
}

GradCheckResult check_loss_rep(std::uint64_t seed) {
    GradCheckResult r{"loss_rep", 0.0, 1e-4, 0, 0};
    Rng rng(seed);
    const CameraIntrinsics k{300, 310, 32, 30, 64, 60};
    const ScenePose gt(axis_angle_rotation({rng.normal(), rng.normal(), rng.normal()}, rng.uniform(0, 60)),
                       Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
    std::vector<Point3> pts;
    std::vector<Pixel2> px;
    for (int i = 0; i < 20; ++i) {
        const Pixel2 p{rng.uniform(0, 63), rng.uniform(0, 59)};
        px.push_back(p);
        // predicted points near but not at the exact backprojection
        const Point3 w = backproject(k, gt, p, rng.uniform(2, 10));
        pts.push_back(w + Point3(rng.normal(), rng.normal(), rng.normal()) * 0.2);
    }
    const PointLoss l = loss_rep(pts, px, k, gt);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            const double v = pts[i][a];
            pts[i][a] = v + kFdStep;
            const double fp = loss_rep(pts, px, k, gt).loss;
            pts[i][a] = v - kFdStep;
            const double fm = loss_rep(pts, px, k, gt).loss;
            pts[i][a] = v;
            r.max_rel_error = std::max(r.max_rel_error, relative_error(l.grads[i][a], (fp - fm) / (2 * kFdStep)));
            ++r.entries;
        }
    return r;
}

GradCheckResult check_loss_3d(std::uint64_t seed) {
    GradCheckResult r{"loss_3d", 0.0, 1e-4, 0, 0};
    Rng rng(seed);
    std::vector<Point3> pred, gt;
    for (int i = 0; i < 20; ++i) {
        gt.emplace_back(rng.normal(), rng.normal(), rng.normal());
        pred.push_back(gt.back() + Point3(rng.normal(), rng.normal(), rng.normal()));
    }
    const PointLoss l = loss_3d(pred, gt);
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            const double v = pred[i][a];
            pred[i][a] = v + kFdStep;
            const double fp = loss_3d(pred, gt).loss;
            pred[i][a] = v - kFdStep;
            const double fm = loss_3d(pred, gt).loss;
            pred[i][a] = v;
            r.max_rel_error = std::max(r.max_rel_error, relative_error(l.grads[i][a], (fp - fm) / (2 * kFdStep)));
            ++r.entries;
        }
    return r;
}

RegressorConfig miniature_config(std::uint64_t seed) {
    RegressorConfig cfg;
    cfg.input_height = 8;
    cfg.input_width = 8;
    cfg.encoder_channels = {2, 2};
    cfg.zero_init_heads = false;
    cfg.seed = seed;
    return cfg;
}

namespace {

std::vector<double> flatten(const RegressorOutput& o) {
    std::vector<double> v = o.heatmap.values;
    for (const auto& c : o.coords.values) v.insert(v.end(), {c.x(), c.y(), c.z()});
    return v;
}

}  // namespace

GradCheckResult check_network_jacobian(std::uint64_t seed, const RegressorConfig& cfg) {
    GradCheckResult r{"network_jacobian", 0.0, 1e-3, 0, 0};
    Regressor net(cfg);
    Rng rng(derive_seed(seed, 7));
    RgbImage img(cfg.input_width, cfg.input_height);
    for (double& v : img.data) v = rng.uniform();

    const std::vector<double> base = flatten(net.forward(img));
    const std::vector<bool> pattern = net.relu_pattern();
    const std::size_t n_out = base.size();
    const std::size_t n_heat = static_cast<std::size_t>(cfg.input_width) * cfg.input_height;
    const std::size_t n_par = net.params().size();

    // analytic Jacobian rows, one backward pass per output
    std::vector<std::vector<double>> jac(n_out);
    Heatmap gh(cfg.input_width, cfg.input_height, 0.0);
    CoordMap gc(cfg.input_width, cfg.input_height, Point3::Zero());
    for (std::size_t o = 0; o < n_out; ++o) {
        net.forward(img);
        if (o < n_heat)
            gh.values[o] = 1.0;
        else
            gc.values[(o - n_heat) / 3][static_cast<int>((o - n_heat) % 3)] = 1.0;
        jac[o] = net.backward(img, &gh, &gc);
        if (o < n_heat)
            gh.values[o] = 0.0;
        else
            gc.values[(o - n_heat) / 3] = Point3::Zero();
    }

    for (std::size_t p = 0; p < n_par; ++p) {
        const double v = net.params()[p];
        net.params()[p] = v + kFdStep;
        const std::vector<double> fp = flatten(net.forward(img));
        const bool kink_p = net.relu_pattern() != pattern;
        net.params()[p] = v - kFdStep;
        const std::vector<double> fm = flatten(net.forward(img));
        const bool kink_m = net.relu_pattern() != pattern;
        net.params()[p] = v;
        if (kink_p || kink_m) {
            r.skipped += n_out;
            continue;
        }
        for (std::size_t o = 0; o < n_out; ++o) {
            const double num = (fp[o] - fm[o]) / (2 * kFdStep);
            r.max_rel_error = std::max(r.max_rel_error, relative_error(jac[o][p], num));
            ++r.entries;
        }
    }
    return r;
}

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t first_seed, int seeds) {
    std::vector<GradCheckResult> out;
    for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(s);
        out.push_back(check_loss_sim(seed));
        out.push_back(check_loss_rep(seed));
        out.push_back(check_loss_3d(seed));
        out.push_back(check_network_jacobian(seed, miniature_config(seed)));
    }
    return out;
}

}  // namespace reloc

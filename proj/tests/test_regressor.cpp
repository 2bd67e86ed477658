#include "reloc/errors.hpp"
#include "reloc/gradcheck.hpp"
#include "reloc/regressor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace reloc {
namespace {

RgbImage random_image(int w, int h, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0, 1);
    RgbImage img(w, h);
    for (double& v : img.data) v = u(gen);
    return img;
}

RegressorConfig small_config() {
    RegressorConfig c;
    c.input_width = 16;
    c.input_height = 16;
    c.encoder_channels = {3, 4};
    c.zero_init_heads = false;
    c.seed = 5;
    return c;
}

TEST(Regressor, ZeroHeadsGiveHalfAndCenter) {
    RegressorConfig c;
    c.coord_center = Eigen::Vector3d(1, 2, 3);
    Regressor net(c);
    const RegressorOutput out = net.forward(RgbImage(64, 64, 0.0));
    ASSERT_EQ(out.heatmap.width, 64);
    ASSERT_EQ(out.coords.height, 64);
    for (double v : out.heatmap.values) ASSERT_EQ(v, 0.5);
    for (const auto& p : out.coords.values) ASSERT_EQ(p, Eigen::Vector3d(1, 2, 3));
}

TEST(Regressor, OutputShapeAndRange) {
    Regressor net(small_config());
    const RegressorOutput out = net.forward(random_image(16, 16, 1));
    EXPECT_EQ(out.heatmap.width, 16);
    EXPECT_EQ(out.heatmap.height, 16);
    for (double v : out.heatmap.values) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    EXPECT_THROW(net.forward(RgbImage(16, 8)), ShapeMismatch);
}

TEST(Regressor, ConfigValidation) {
    RegressorConfig c = small_config();
    c.input_width = 18;  // not divisible by 4
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config();
    c.encoder_channels.clear();
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Regressor, SeededInitialization) {
    Regressor a(small_config()), b(small_config());
    EXPECT_EQ(a.params(), b.params());
    RegressorConfig c = small_config();
    c.seed = 6;
    EXPECT_NE(Regressor(c).params(), a.params());
    for (std::size_t i = a.encoder_params().begin; i < a.encoder_params().end; ++i)
        ASSERT_LE(std::abs(a.params()[i]), 1.0 / std::sqrt(3.0 * 9.0) + 1e-15);
}

TEST(Regressor, ParameterGroupsPartitionParams) {
    Regressor net(small_config());
    EXPECT_EQ(net.encoder_params().begin, 0u);
    EXPECT_EQ(net.encoder_params().end, net.coord_params().begin);
    EXPECT_EQ(net.coord_params().end, net.heatmap_params().begin);
    EXPECT_EQ(net.heatmap_params().end, net.params().size());
}

// Dependency mask propagation from layer geometry (3x3 convs, stride 2 in the
// encoder, nearest 2x upsampling and skip concatenation in the decoders).
using Mask = std::vector<std::vector<bool>>;

Mask conv_mask(const Mask& in, int stride) {
    const int h = static_cast<int>(in.size()), w = static_cast<int>(in[0].size());
    const int ho = h / stride, wo = w / stride;
    Mask out(ho, std::vector<bool>(wo, false));
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int iy = y * stride + dy, ix = x * stride + dx;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w && in[iy][ix]) out[y][x] = true;
                }
    return out;
}

Mask upsample_mask(const Mask& in) {
    Mask out(in.size() * 2, std::vector<bool>(in[0].size() * 2));
    for (std::size_t y = 0; y < out.size(); ++y)
        for (std::size_t x = 0; x < out[0].size(); ++x) out[y][x] = in[y / 2][x / 2];
    return out;
}

Mask unite(const Mask& a, const Mask& b) {
    Mask out = a;
    for (std::size_t y = 0; y < a.size(); ++y)
        for (std::size_t x = 0; x < a[0].size(); ++x) out[y][x] = a[y][x] || b[y][x];
    return out;
}

Mask output_mask(int w, int h, int stages, int py, int px) {
    std::vector<Mask> enc;
    Mask m(h, std::vector<bool>(w, false));
    m[py][px] = true;
    enc.push_back(m);
    for (int s = 0; s < stages; ++s) enc.push_back(conv_mask(enc.back(), 2));
    Mask cur = enc.back();
    for (int s = stages - 1; s >= 0; --s) cur = unite(conv_mask(upsample_mask(cur), 1), enc[s]);
    return conv_mask(cur, 1);
}

TEST(Regressor, ReceptiveFieldMatchesLayerGeometry) {
    RegressorConfig c = small_config();
    c.input_width = 32;
    c.input_height = 32;
    Regressor net(c);
    const RgbImage base = random_image(32, 32, 2);
    const RegressorOutput ref = net.forward(base);
    for (const auto& [py, px] : {std::pair{0, 0}, std::pair{13, 20}, std::pair{31, 5}}) {
        RgbImage img = base;
        for (int ch = 0; ch < 3; ++ch) img.at(py, px, ch) += 0.3;
        const RegressorOutput out = net.forward(img);
        const Mask mask = output_mask(32, 32, 2, py, px);
        int changed_inside = 0;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * 32 + x;
                const bool changed = out.heatmap.values[i] != ref.heatmap.values[i] ||
                                     out.coords.values[i] != ref.coords.values[i];
                if (!mask[y][x]) {
                    ASSERT_FALSE(changed) << "(" << y << "," << x << ") outside the receptive field";
                }
                changed_inside += changed;
            }
        EXPECT_GT(changed_inside, 0);
    }
}

TEST(Regressor, ZeroUpstreamGivesZeroGradients) {
    Regressor net(small_config());
    const RgbImage img = random_image(16, 16, 3);
    net.forward(img);
    const Heatmap gh(16, 16, 0.0);
    const CoordMap gc(16, 16, Point3::Zero());
    for (double g : net.backward(img, &gh, &gc)) ASSERT_EQ(g, 0.0);
}

TEST(Regressor, SkippedBranchHasExactlyZeroGradient) {
    Regressor net(small_config());
    const RgbImage img = random_image(16, 16, 4);
    net.forward(img);
    const CoordMap gc(16, 16, Point3(0.3, -0.2, 1.0));
    const auto g = net.backward(img, nullptr, &gc);
    for (std::size_t i = net.heatmap_params().begin; i < net.heatmap_params().end; ++i) ASSERT_EQ(g[i], 0.0);
    const Heatmap gh(16, 16, 0.7);
    const auto g2 = net.backward(img, &gh, nullptr);
    for (std::size_t i = net.coord_params().begin; i < net.coord_params().end; ++i) ASSERT_EQ(g2[i], 0.0);
}

TEST(Regressor, StaleForward) {
    Regressor net(small_config());
    const RgbImage a = random_image(16, 16, 5), b = random_image(16, 16, 6);
    const Heatmap gh(16, 16, 1.0);
    EXPECT_THROW(net.backward(a, &gh, nullptr), StaleForward);
    net.forward(a);
    EXPECT_THROW(net.backward(b, &gh, nullptr), StaleForward);
    net.forward(a, false);
    EXPECT_THROW(net.backward(a, &gh, nullptr), StaleForward);
}

// Central differences of a scalar probe <u, out> against backward().
void expect_probe_gradient(Regressor& net, const RgbImage& img, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n;
    const int W = net.config().input_width, H = net.config().input_height;
    Heatmap uh(W, H, 0.0);
    CoordMap uc(W, H, Point3::Zero());
    for (double& v : uh.values) v = n(gen);
    for (auto& p : uc.values) p = Point3(n(gen), n(gen), n(gen));
    const auto probe = [&]() {
        const RegressorOutput o = net.forward(img);
        double s = 0;
        for (std::size_t i = 0; i < o.heatmap.values.size(); ++i)
            s += uh.values[i] * o.heatmap.values[i] + uc.values[i].dot(o.coords.values[i]);
        return s;
    };
    probe();
    const auto g = net.backward(img, &uh, &uc);
    const double h = 1e-5;
    for (std::size_t i = 0; i < net.params().size(); ++i) {
        const double v = net.params()[i];
        net.params()[i] = v + h;
        const double fp = probe();
        net.params()[i] = v - h;
        const double fm = probe();
        net.params()[i] = v;
        const double num = (fp - fm) / (2 * h);
        ASSERT_LT(std::abs(num - g[i]) / std::max({std::abs(num), std::abs(g[i]), 1e-6}), 1e-4) << "param " << i;
    }
}

TEST(Regressor, SmoothNetworkGradientMatchesFiniteDifferences) {
    RegressorConfig c = miniature_config(7);
    c.encoder_activation = Activation::elu;
    c.heatmap_hidden_activation = Activation::elu;
    Regressor net(c);
    expect_probe_gradient(net, random_image(8, 8, 8), 9);
}

TEST(Regressor, FullJacobianOnMiniatureConfig) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const GradCheckResult r = check_network_jacobian(seed, miniature_config(seed));
        EXPECT_LT(r.max_rel_error, 1e-3) << "seed " << seed;
        EXPECT_GT(r.entries, 0u);
    }
}

TEST(Regressor, Activations) {
    EXPECT_EQ(activate(Activation::relu, -2.0), 0.0);
    EXPECT_EQ(activate(Activation::relu, 2.0), 2.0);
    EXPECT_NEAR(activate(Activation::elu, -1.0), std::exp(-1.0) - 1.0, 1e-15);
    EXPECT_EQ(activate(Activation::elu, 0.5), 0.5);
    EXPECT_EQ(activate_deriv(Activation::relu, -0.1), 0.0);
    EXPECT_EQ(activate_deriv(Activation::relu, 0.1), 1.0);
    EXPECT_NEAR(activate_deriv(Activation::elu, -2.0), std::exp(-2.0), 1e-15);
    EXPECT_EQ(activate_deriv(Activation::identity, -3.0), 1.0);
    EXPECT_EQ(logistic(0.0), 0.5);
}

TEST(Adam, ZeroGradientZeroDecayIsNoop) {
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    AdamState st;
    AdamParams ap;
    ap.weight_decay = 0;
    for (int i = 0; i < 5; ++i) adam_step(p, g, st, ap);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepIsSignedLearningRate) {
    std::vector<double> p{0.0, 0.0, 0.0};
    const std::vector<double> g{0.5, -3.0, 1e-3};
    AdamState st;
    AdamParams ap;
    ap.weight_decay = 0;
    adam_step(p, g, st, ap);
    // m_hat = g, v_hat = g^2
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], -1e-4 * g[i] / (std::abs(g[i]) + 1e-8), 1e-18);
    EXPECT_NEAR(p[1], 1e-4, 1e-11);
    EXPECT_EQ(st.t, 1u);
}

TEST(Adam, CoupledWeightDecay) {
    // with zero gradient, decay alone acts like a gradient wd * p
    std::vector<double> p{2.0};
    AdamState st;
    AdamParams ap;
    adam_step(p, std::vector<double>{0.0}, st, ap);
    EXPECT_NEAR(p[0], 2.0 - 1e-4 * 1e-3 / (1e-3 + 1e-8), 1e-15);
}

TEST(Adam, QuadraticDecreasesMonotonicallyAfterBurnIn) {
    // f(x) = 0.5 * a * (x - 3)^2
    const double a = 2.0;
    std::vector<double> x{-4.0};
    AdamState st;
    AdamParams ap;
    ap.lr = 0.05;
    ap.weight_decay = 0;
    std::vector<double> f;
    for (int i = 0; i < 100; ++i) {
        f.push_back(0.5 * a * (x[0] - 3) * (x[0] - 3));
        adam_step(x, std::vector<double>{a * (x[0] - 3)}, st, ap);
    }
    for (std::size_t i = 10; i < f.size(); ++i) ASSERT_LT(f[i], f[i - 1]);
    EXPECT_LT(f.back(), f.front() * 0.2);
}

TEST(Adam, DefaultsFollowPaper) {
    const AdamParams ap;
    EXPECT_EQ(ap.lr, 1e-4);
    EXPECT_EQ(ap.beta1, 0.9);
    EXPECT_EQ(ap.beta2, 0.999);
    EXPECT_EQ(ap.epsilon, 1e-8);
    EXPECT_EQ(ap.weight_decay, 5e-4);
}

TEST(Checkpoint, RoundTripIsExact) {
    RegressorConfig c = small_config();
    c.coord_center = Eigen::Vector3d(0.1, 0.2, 0.3);
    c.coord_scale = 4.5;
    Regressor net(c);
    TrainState st;
    st.iteration = 77;
    st.encoder.t = 3;
    st.encoder.m.assign(net.encoder_params().size(), 0.25);
    st.encoder.v.assign(net.encoder_params().size(), 0.5);
    st.coord.m.assign(net.coord_params().size(), 0.0);
    st.coord.v.assign(net.coord_params().size(), 0.0);
    st.heatmap.m.assign(net.heatmap_params().size(), -1.5);
    st.heatmap.v.assign(net.heatmap_params().size(), 2.0);
    const auto path = std::filesystem::temp_directory_path() / "reloc_ckpt.bin";
    save_checkpoint(path, net, &st);
    std::optional<TrainState> back;
    const Regressor loaded = load_checkpoint(path, &back);
    EXPECT_TRUE(loaded.config() == net.config());
    EXPECT_EQ(loaded.params(), net.params());
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(back->iteration, 77u);
    EXPECT_EQ(back->encoder.m, st.encoder.m);
    EXPECT_EQ(back->encoder.t, 3u);

    save_checkpoint(path, net);
    std::optional<TrainState> none;
    load_checkpoint(path, &none);
    EXPECT_FALSE(none.has_value());
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const auto path = std::filesystem::temp_directory_path() / "reloc_ckpt_bad.bin";
    std::ofstream(path, std::ios::binary) << "RFMODEL1\x01";
    EXPECT_THROW(load_checkpoint(path), ParseError);
    std::ofstream(path, std::ios::binary) << "NOTMODEL";
    EXPECT_THROW(load_checkpoint(path), ParseError);
}

}  // namespace
}  // namespace reloc

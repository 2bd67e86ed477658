#include "reloc/errors.hpp"
#include "reloc/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace reloc {
namespace {

constexpr double kStep = 1e-5;

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

Heatmap random_map(std::mt19937_64& gen, int w, int h) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Heatmap m(w, h, 0.0);
    for (double& v : m.values) v = u(gen);
    return m;
}

// Tile-wise cosine with numpy-style explicit loops.
double sim_oracle(const Heatmap& a, const Heatmap& b, int n) {
    double sum = 0;
    int tiles = 0;
    for (int ty = 0; ty + n <= a.height; ty += n)
        for (int tx = 0; tx + n <= a.width; tx += n) {
            std::vector<double> va, vb;
            for (int y = ty; y < ty + n; ++y)
                for (int x = tx; x < tx + n; ++x) {
                    va.push_back(a.at(y, x));
                    vb.push_back(b.at(y, x));
                }
            double dot = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < va.size(); ++i) {
                dot += va[i] * vb[i];
                na += va[i] * va[i];
                nb += vb[i] * vb[i];
            }
            sum += (na == 0 && nb == 0) ? 1.0 : (na == 0 || nb == 0) ? 0.0 : dot / std::sqrt(na * nb);
            ++tiles;
        }
    return 1.0 - sum / tiles;
}

TEST(LossSim, IdenticalMapsScoreZero) {
    std::mt19937_64 gen(1);
    const Heatmap a = random_map(gen, 16, 16);
    EXPECT_NEAR(loss_sim(a, a, 8).loss, 0.0, 1e-15);
    Heatmap scaled = a;
    for (double& v : scaled.values) v *= 3.0;
    EXPECT_NEAR(loss_sim(scaled, a, 8).loss, 0.0, 1e-15);  // cosine is scale invariant
}

TEST(LossSim, MatchesTileOracle) {
    std::mt19937_64 gen(2);
    for (int i = 0; i < 10; ++i) {
        const Heatmap a = random_map(gen, 16 + i, 12 + 2 * i), b = random_map(gen, 16 + i, 12 + 2 * i);
        EXPECT_NEAR(loss_sim(a, b, 4).loss, sim_oracle(a, b, 4), 1e-14);
    }
}

TEST(LossSim, RemainderIsCropped) {
    std::mt19937_64 gen(3);
    Heatmap a = random_map(gen, 17, 19);
    const Heatmap b = random_map(gen, 17, 19);
    const HeatmapLoss base = loss_sim(a, b, 8);
    a.at(18, 3) = 0.0;
    a.at(2, 16) = 5.0;
    EXPECT_EQ(loss_sim(a, b, 8).loss, base.loss);
    EXPECT_EQ(base.grad.at(18, 3), 0.0);
    EXPECT_EQ(base.grad.at(2, 16), 0.0);
}

TEST(LossSim, DegenerateTiles) {
    Heatmap zero(8, 8, 0.0), one(8, 8, 1.0);
    EXPECT_EQ(loss_sim(zero, zero, 8).loss, 0.0);
    const HeatmapLoss l = loss_sim(zero, one, 8);
    EXPECT_EQ(l.loss, 1.0);
    for (double g : l.grad.values) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(loss_sim(one, zero, 8).loss, 1.0);
}

TEST(LossSim, GradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 5; ++trial) {
        Heatmap a = random_map(gen, 16, 16);
        const Heatmap b = random_map(gen, 16, 16);
        const HeatmapLoss l = loss_sim(a, b, 8);
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            const double v = a.values[i];
            a.values[i] = v + kStep;
            const double fp = loss_sim(a, b, 8).loss;
            a.values[i] = v - kStep;
            const double fm = loss_sim(a, b, 8).loss;
            a.values[i] = v;
            ASSERT_LT(rel_err(l.grad.values[i], (fp - fm) / (2 * kStep)), 1e-4);
        }
    }
}

TEST(LossSim, SizeErrors) {
    EXPECT_THROW(loss_sim(Heatmap(8, 8), Heatmap(8, 9), 8), DimensionMismatch);
    EXPECT_THROW(loss_sim(Heatmap(4, 4), Heatmap(4, 4), 8), DimensionMismatch);
}

struct RepFixture {
    CameraIntrinsics k{300, 320, 32, 30, 64, 60};
    ScenePose pose{axis_angle_rotation({1, 2, 0.5}, 30), Eigen::Vector3d(0.2, -0.1, 4)};
};

TEST(LossRep, ExactPointsScoreZero) {
    RepFixture f;
    std::vector<Point3> X;
    std::vector<Pixel2> px;
    for (int i = 0; i < 10; ++i) {
        px.emplace_back(3.0 * i, 2.0 * i + 1);
        X.push_back(backproject(f.k, f.pose, px.back(), 2.0 + i));
    }
    const PointLoss l = loss_rep(X, px, f.k, f.pose);
    EXPECT_LT(l.loss, 1e-9);
}

TEST(LossRep, MeanUnsquaredDistance) {
    RepFixture f;
    const Point3 X = backproject(f.k, f.pose, Pixel2(10, 20), 3.0);
    const PointLoss l = loss_rep({X, X}, {Pixel2(13, 24), Pixel2(10, 21)}, f.k, f.pose);
    EXPECT_NEAR(l.loss, (5.0 + 1.0) / 2, 1e-9);
}

TEST(LossRep, BehindDepthFloorThrows) {
    RepFixture f;
    const Point3 near = backproject(f.k, f.pose, Pixel2(5, 5), 0.05);
    const Point3 ok = backproject(f.k, f.pose, Pixel2(5, 5), 2.0);
    try {
        loss_rep({ok, near}, {Pixel2(5, 5), Pixel2(5, 5)}, f.k, f.pose);
        FAIL();
    } catch (const BehindCamera& e) {
        EXPECT_EQ(e.index, 1u);
    }
}

TEST(LossRep, GradientMatchesFiniteDifferences) {
    RepFixture f;
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n;
    std::vector<Point3> X;
    std::vector<Pixel2> px;
    for (int i = 0; i < 20; ++i) {
        px.emplace_back(2.0 + 3 * i, 50.0 - 2 * i);
        X.push_back(backproject(f.k, f.pose, px.back(), 3.0) + 0.2 * Point3(n(gen), n(gen), n(gen)));
    }
    const PointLoss l = loss_rep(X, px, f.k, f.pose);
    for (std::size_t i = 0; i < X.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            const double v = X[i][a];
            X[i][a] = v + kStep;
            const double fp = loss_rep(X, px, f.k, f.pose).loss;
            X[i][a] = v - kStep;
            const double fm = loss_rep(X, px, f.k, f.pose).loss;
            X[i][a] = v;
            ASSERT_LT(rel_err(l.grads[i][a], (fp - fm) / (2 * kStep)), 1e-4);
        }
}

TEST(Loss3d, MeanEuclideanDistance) {
    const PointLoss l = loss_3d({Point3(3, 4, 0), Point3(1, 1, 1)}, {Point3::Zero(), Point3(1, 1, 1)});
    EXPECT_DOUBLE_EQ(l.loss, 2.5);
    EXPECT_EQ(l.grads[1], Eigen::Vector3d::Zero());
    EXPECT_LT((l.grads[0] - Eigen::Vector3d(0.3, 0.4, 0)).norm(), 1e-15);
}

TEST(Loss3d, GradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> n;
    std::vector<Point3> pred, gt;
    for (int i = 0; i < 20; ++i) {
        gt.emplace_back(n(gen), n(gen), n(gen));
        pred.push_back(gt.back() + Point3(n(gen), n(gen), n(gen)));
    }
    const PointLoss l = loss_3d(pred, gt);
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            const double v = pred[i][a];
            pred[i][a] = v + kStep;
            const double fp = loss_3d(pred, gt).loss;
            pred[i][a] = v - kStep;
            const double fm = loss_3d(pred, gt).loss;
            pred[i][a] = v;
            ASSERT_LT(rel_err(l.grads[i][a], (fp - fm) / (2 * kStep)), 1e-4);
        }
}

TEST(Loss3d, SizeErrors) {
    EXPECT_THROW(loss_3d({}, {}), DimensionMismatch);
    EXPECT_THROW(loss_3d({Point3::Zero()}, {}), DimensionMismatch);
}

TEST(LossAll, DefaultWeights) {
    const LossWeights w;
    EXPECT_EQ(w.lambda_sim, 1.0);
    EXPECT_EQ(w.lambda_rep, 0.1);
    EXPECT_EQ(w.lambda_3d, 1.0);
    EXPECT_TRUE(w.valid());
    EXPECT_FALSE((LossWeights{0, 0, 0}).valid());
    EXPECT_FALSE((LossWeights{-1, 0, 1}).valid());
}

TEST(LossAll, LinearInEachTerm) {
    const LossWeights w;
    EXPECT_EQ(loss_all(1, 0, 0, w), 1.0);
    EXPECT_EQ(loss_all(0, 1, 0, w), 0.1);
    EXPECT_EQ(loss_all(0, 0, 1, w), 1.0);
    EXPECT_EQ(loss_all(0.5, 2, 0.25, w), 0.5 + 0.1 * 2 + 0.25);
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0, 10);
    const double eps = std::numeric_limits<double>::epsilon();
    for (int i = 0; i < 1000; ++i) {
        const double a1 = u(gen), b1 = u(gen), c1 = u(gen), a2 = u(gen), b2 = u(gen), c2 = u(gen);
        const double lhs = loss_all(a1 + a2, b1 + b2, c1 + c2, w);
        const double rhs = loss_all(a1, b1, c1, w) + loss_all(a2, b2, c2, w);
        ASSERT_LE(std::abs(lhs - rhs), 8 * eps * std::abs(rhs));
    }
}

}  // namespace
}  // namespace reloc

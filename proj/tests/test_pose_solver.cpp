#include "reloc/errors.hpp"
#include "reloc/pose_solver.hpp"

#include <gtest/gtest.h>

#include <random>

namespace reloc {
namespace {

const CameraIntrinsics kCam{500, 500, 320, 240, 640, 480};

struct Instance {
    ScenePose pose;
    std::vector<Correspondence> corrs;
};

Instance random_instance(std::mt19937_64& gen, int n) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0, 1);
    Instance ins;
    ins.pose = ScenePose(Eigen::Quaterniond(nd(gen), nd(gen), nd(gen), nd(gen)).normalized(),
                         Eigen::Vector3d(nd(gen), nd(gen), nd(gen)));
    for (int i = 0; i < n; ++i) {
        const Pixel2 p(u(gen) * 639, u(gen) * 479);
        ins.corrs.push_back({p, backproject(kCam, ins.pose, p, 2.0 + 8.0 * u(gen)), 1.0});
    }
    return ins;
}

double best_p3p_error(const std::vector<ScenePose>& cands, const ScenePose& gt) {
    double best = 1e300;
    for (const auto& c : cands) {
        const PoseError e = pose_errors(c, gt);
        best = std::min(best, std::max(e.translation, e.rotation_deg));
    }
    return best;
}

TEST(P3P, RecoversGeneratingPose) {
    std::mt19937_64 gen(1);
    for (int i = 0; i < 200; ++i) {
        const Instance ins = random_instance(gen, 3);
        const auto cands = p3p_solve(ins.corrs, kCam);
        ASSERT_FALSE(cands.empty());
        ASSERT_LE(cands.size(), 4u);
        EXPECT_LT(best_p3p_error(cands, ins.pose), 1e-6) << "instance " << i;
    }
}

TEST(P3P, CandidatesReprojectTheirSample) {
    std::mt19937_64 gen(2);
    const Instance ins = random_instance(gen, 3);
    for (const auto& pose : p3p_solve(ins.corrs, kCam))
        for (const auto& c : ins.corrs) EXPECT_LT(reprojection_error(kCam, pose, c), 1e-10);
}

TEST(P3P, DegenerateInputs) {
    std::vector<Correspondence> collinear{{Pixel2(1, 2), Point3(0, 0, 5), 1},
                                          {Pixel2(3, 4), Point3(1, 1, 6), 1},
                                          {Pixel2(5, 6), Point3(2, 2, 7), 1}};
    EXPECT_THROW(p3p_solve(collinear, kCam), DegenerateConfiguration);
    std::vector<Correspondence> repeated{{Pixel2(1, 2), Point3(0, 0, 5), 1},
                                         {Pixel2(1, 2), Point3(1, 0, 6), 1},
                                         {Pixel2(5, 6), Point3(0, 2, 7), 1}};
    EXPECT_THROW(p3p_solve(repeated, kCam), DegenerateConfiguration);
    EXPECT_THROW(p3p_solve({}, kCam), std::invalid_argument);
}

TEST(DLT, RecoversGeneratingPose) {
    std::mt19937_64 gen(3);
    for (int i = 0; i < 200; ++i) {
        const Instance ins = random_instance(gen, 6 + i % 20);
        const PoseError e = pose_errors(dlt_solve(ins.corrs, kCam), ins.pose);
        EXPECT_LT(e.translation, 1e-6);
        EXPECT_LT(e.rotation_deg, 1e-6);
    }
}

TEST(DLT, PlanarPointsAreRankDeficient) {
    std::vector<Correspondence> corrs;
    const ScenePose pose(Mat3::Identity(), Eigen::Vector3d(0, 0, 5));
    for (int i = 0; i < 12; ++i) {
        const Point3 X(i % 4 - 1.5, i / 4 - 1.0, 0.0);
        corrs.push_back({project(kCam, pose, X), X, 1});
    }
    EXPECT_THROW(dlt_solve(corrs, kCam), RankDeficient);
}

TEST(DLT, TooFewPoints) {
    std::mt19937_64 gen(4);
    EXPECT_THROW(dlt_solve(random_instance(gen, 5).corrs, kCam), DegenerateConfiguration);
}

TEST(Refine, ObjectiveNeverIncreases) {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 50; ++i) {
        Instance ins = random_instance(gen, 30);
        for (auto& c : ins.corrs) c.pixel += Pixel2(nd(gen), nd(gen)) * 0.5;
        const ScenePose start(axis_angle_rotation({nd(gen), nd(gen), nd(gen)}, 2.0) * ins.pose.R(),
                              ins.pose.translation + 0.05 * Eigen::Vector3d(nd(gen), nd(gen), nd(gen)));
        const RefineResult r = refine_pose_traced(start, ins.corrs, kCam, 20);
        for (std::size_t j = 1; j < r.objective.size(); ++j) ASSERT_LE(r.objective[j], r.objective[j - 1]);
        EXPECT_LT(r.objective.back(), r.objective.front());
    }
}

TEST(Refine, ConvergesToExactPose) {
    std::mt19937_64 gen(6);
    const Instance ins = random_instance(gen, 20);
    const ScenePose start(axis_angle_rotation({1, 0, 0}, 3.0) * ins.pose.R(), ins.pose.translation);
    const PoseError e = pose_errors(refine_pose(start, ins.corrs, kCam, 20), ins.pose);
    EXPECT_LT(e.translation, 1e-8);
    EXPECT_LT(e.rotation_deg, 1e-8);
}

TEST(Refine, ConvergesFromTranslatedStart) {
    std::mt19937_64 gen(9);
    for (int i = 0; i < 20; ++i) {
        const Instance ins = random_instance(gen, 30);
        const ScenePose start(axis_angle_rotation({0, 1, 1}, 2.0) * ins.pose.R(),
                              ins.pose.translation + Eigen::Vector3d(0.2, -0.1, 0.3));
        const PoseError e = pose_errors(refine_pose(start, ins.corrs, kCam, 10), ins.pose);
        EXPECT_LT(e.translation, 1e-8);
        EXPECT_LT(e.rotation_deg, 1e-8);
    }
}

TEST(Refine, NeedsFourPoints) {
    std::mt19937_64 gen(7);
    const Instance ins = random_instance(gen, 3);
    EXPECT_THROW(refine_pose(ins.pose, ins.corrs, kCam, 5), TooFewInliers);
}

TEST(Ransac, FindsPoseDespiteOutliers) {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0, 1);
    Instance ins = random_instance(gen, 200);
    std::vector<bool> outlier(200, false);
    for (int i = 0; i < 60; ++i) {
        outlier[i * 3] = true;
        ins.corrs[i * 3].pixel = Pixel2(u(gen) * 639, u(gen) * 479);
    }
    const PoseEstimate est = ransac_pnp(ins.corrs, kCam, RansacConfig{});
    const PoseError e = pose_errors(est.pose, ins.pose);
    EXPECT_LT(e.translation, 1e-6);
    EXPECT_LT(e.rotation_deg, 1e-6);
    std::size_t recovered = 0;
    for (std::size_t i = 0; i < outlier.size(); ++i) recovered += !outlier[i] && est.inlier_mask[i];
    EXPECT_EQ(recovered, 140u);
    EXPECT_EQ(est.inlier_mask.size(), 200u);
    EXPECT_GE(est.inlier_count, est.hypothesis_inlier_count);
}

TEST(Ransac, DeterministicUnderSeed) {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> nd;
    Instance ins = random_instance(gen, 80);
    for (auto& c : ins.corrs) c.pixel += Pixel2(nd(gen), nd(gen));
    RansacConfig cfg;
    cfg.seed = 17;
    const PoseEstimate a = ransac_pnp(ins.corrs, kCam, cfg), b = ransac_pnp(ins.corrs, kCam, cfg);
    EXPECT_EQ(format_estimate(1, a), format_estimate(1, b));
    EXPECT_EQ(a.inlier_mask, b.inlier_mask);
}

TEST(Ransac, Errors) {
    std::mt19937_64 gen(10);
    EXPECT_THROW(ransac_pnp(random_instance(gen, 3).corrs, kCam, RansacConfig{}), TooFewCorrespondences);
    std::vector<Correspondence> line;
    for (int i = 0; i < 10; ++i) line.push_back({Pixel2(10 + i, 20 + 3 * i), Point3(i, 2 * i, 5), 1});
    EXPECT_THROW(ransac_pnp(line, kCam, RansacConfig{}), NoValidHypothesis);
}

TEST(Ransac, DefaultsMatchPaperSettings) {
    const RansacConfig cfg;
    EXPECT_EQ(cfg.iterations, 100);
    EXPECT_EQ(cfg.inlier_threshold_px, 3.0);
}

TEST(PoseSolver, ReprojectionErrorBehindCameraIsInfinite) {
    const ScenePose pose;
    EXPECT_TRUE(std::isinf(reprojection_error(kCam, pose, {Pixel2(0, 0), Point3(0, 0, -1), 1})));
    EXPECT_DOUBLE_EQ(reprojection_error(kCam, pose, {Pixel2(323, 244), Point3(0, 0, 1), 1}), 25.0);
}

TEST(PoseSolver, FormatEstimate) {
    PoseEstimate est;
    est.inlier_mask = {true, false, true};
    est.inlier_count = 2;
    est.mean_inlier_error = 0.5;
    EXPECT_EQ(format_estimate(3, est), format_pose_line(3, est.pose) + " inliers=2/3 mean_err=0.5");
}

}  // namespace
}  // namespace reloc

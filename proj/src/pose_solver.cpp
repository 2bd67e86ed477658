#include "reloc/pose_solver.hpp"

#include "reloc/errors.hpp"
#include "reloc/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>

namespace reloc {

namespace {

using cd = std::complex<double>;
using Poly = std::vector<double>;  // ascending powers

constexpr double kCollinearTol = 1e-9;
constexpr double kDltGapTol = 1e-6;
constexpr double kP3pResidualPx = 1e-6;

Poly mul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

Poly add(Poly a, const Poly& b, double scale = 1.0) {
    if (a.size() < b.size()) a.resize(b.size(), 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) a[i] += scale * b[i];
    return a;
}

double eval(const Poly& p, double x) {
    double r = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) r = r * x + p[i];
    return r;
}

double eval_deriv(const Poly& p, double x) {
    double r = 0.0;
    for (std::size_t i = p.size(); i-- > 1;) r = r * x + static_cast<double>(i) * p[i];
    return r;
}

cd cbrt_c(cd z) { return z == cd(0) ? cd(0) : std::pow(z, 1.0 / 3.0); }

// Real roots of a quartic (ascending coefficients), polished by Newton steps.
std::vector<double> quartic_real_roots(const Poly& p) {
    const double a4 = p[4];
    const double b = p[3] / a4, c = p[2] / a4, d = p[1] / a4, e = p[0] / a4;
    // Depressed quartic y^4 + P y^2 + Q y + R with x = y - b/4.
    const double P = c - 3.0 * b * b / 8.0;
    const double Q = d - b * c / 2.0 + b * b * b / 8.0;
    const double R = e - b * d / 4.0 + b * b * c / 16.0 - 3.0 * b * b * b * b / 256.0;

    std::vector<cd> ys;
    if (std::abs(Q) < 1e-14 * (1.0 + std::abs(P) + std::abs(R))) {
        // Biquadratic.
        const cd disc = std::sqrt(cd(P * P - 4.0 * R));
        for (const cd z : {(-P + disc) / 2.0, (-P - disc) / 2.0}) {
            const cd s = std::sqrt(z);
            ys.push_back(s);
            ys.push_back(-s);
        }
    } else {
        // Resolvent cubic 8m^3 - 4P m^2 - 8R m + (4PR - Q^2) = 0; any root with 2m - P != 0.
        const double A = -P / 2.0, B = -R, C = (4.0 * P * R - Q * Q) / 8.0;
        const double shift = A / 3.0;
        const double pp = B - A * A / 3.0;
        const double qq = 2.0 * A * A * A / 27.0 - A * B / 3.0 + C;
        const cd disc = std::sqrt(cd(qq * qq / 4.0 + pp * pp * pp / 27.0));
        cd u = cbrt_c(-qq / 2.0 + disc);
        if (std::abs(u) < 1e-300) u = cbrt_c(-qq / 2.0 - disc);
        cd m = (std::abs(u) < 1e-300) ? cd(0) : u - pp / (3.0 * u);
        m -= shift;
        const cd s = std::sqrt(2.0 * m - P);
        if (std::abs(s) < 1e-300) return {};
        for (const double sign : {1.0, -1.0}) {
            // y^2 - sign*s*y + m + sign*Q/(2s) = 0
            const cd bb = -sign * s, cc = m + sign * Q / (2.0 * s);
            const cd dq = std::sqrt(bb * bb - 4.0 * cc);
            ys.push_back((-bb + dq) / 2.0);
            ys.push_back((-bb - dq) / 2.0);
        }
    }
    std::vector<double> roots;
    for (const cd y : ys) {
        const cd x = y - b / 4.0;
        if (std::abs(x.imag()) > 1e-4 * std::max(1.0, std::abs(x.real()))) continue;
        double r = x.real();
        for (int it = 0; it < 8; ++it) {
            const double f = eval(p, r), df = eval_deriv(p, r);
            if (df == 0.0) break;
            const double step = f / df;
            r -= step;
            if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(r))) break;
        }
        roots.push_back(r);
    }
    return roots;
}

Eigen::Vector3d bearing(const CameraIntrinsics& k, const Pixel2& p) {
    return Eigen::Vector3d((p.x() - k.cx) / k.fx, (p.y() - k.cy) / k.fy, 1.0).normalized();
}

// Orthonormal frame from a non-degenerate triangle.
Mat3 triangle_frame(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    const Eigen::Vector3d e1 = (b - a).normalized();
    const Eigen::Vector3d e3 = e1.cross(c - a).normalized();
    Mat3 F;
    F.col(0) = e1;
    F.col(1) = e3.cross(e1);
    F.col(2) = e3;
    return F;
}

bool same_pose(const ScenePose& a, const ScenePose& b) {
    return std::abs(std::abs(a.rotation.dot(b.rotation)) - 1.0) < 1e-12 &&
           (a.translation - b.translation).norm() < 1e-9 * (1.0 + a.translation.norm());
}

struct Scored {
    std::size_t count = 0;
    double sum_err = 0.0;
    double mean() const { return count ? sum_err / static_cast<double>(count) : 0.0; }
};

Scored score(const std::vector<Correspondence>& corrs, const CameraIntrinsics& k, const ScenePose& pose,
             double thresh_sq, std::vector<bool>* mask) {
    const Mat3 R = pose.R();
    const Eigen::Vector3d& t = pose.translation;
    Scored s;
    if (mask) mask->assign(corrs.size(), false);
    for (std::size_t i = 0; i < corrs.size(); ++i) {
        const Eigen::Vector3d Xc = R * corrs[i].world + t;
        if (!(Xc.z() > 1e-9)) continue;
        const double du = k.fx * Xc.x() / Xc.z() + k.cx - corrs[i].pixel.x();
        const double dv = k.fy * Xc.y() / Xc.z() + k.cy - corrs[i].pixel.y();
        const double e2 = du * du + dv * dv;
        if (e2 <= thresh_sq) {
            ++s.count;
            s.sum_err += std::sqrt(e2);
            if (mask) (*mask)[i] = true;
        }
    }
    return s;
}

bool better(const Scored& a, const Scored& b) {
    return a.count > b.count || (a.count == b.count && a.mean() < b.mean());
}

}  // namespace

double reprojection_error(const CameraIntrinsics& k, const ScenePose& pose, const Correspondence& c) {
    const Eigen::Vector3d Xc = pose.to_camera(c.world);
    if (!(Xc.z() > 1e-9)) return std::numeric_limits<double>::infinity();
    const Eigen::Vector2d r{k.fx * Xc.x() / Xc.z() + k.cx - c.pixel.x(), k.fy * Xc.y() / Xc.z() + k.cy - c.pixel.y()};
    return r.squaredNorm();
}

std::vector<ScenePose> p3p_solve(const std::vector<Correspondence>& corrs, const CameraIntrinsics& k) {
    if (corrs.size() != 3) throw std::invalid_argument("p3p_solve needs exactly 3 correspondences");
    const Point3 &P1 = corrs[0].world, &P2 = corrs[1].world, &P3 = corrs[2].world;
    const double max_edge2 = std::max({(P2 - P1).squaredNorm(), (P3 - P1).squaredNorm(), (P3 - P2).squaredNorm()});
    const double area = 0.5 * (P2 - P1).cross(P3 - P1).norm();
    if (!(max_edge2 > 0) || area / max_edge2 <= kCollinearTol)
        throw DegenerateConfiguration("p3p: world points are collinear");
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            if ((corrs[i].pixel - corrs[j].pixel).norm() < 1e-9)
                throw DegenerateConfiguration("p3p: repeated pixels");

    const Eigen::Vector3d f1 = bearing(k, corrs[0].pixel), f2 = bearing(k, corrs[1].pixel),
                          f3 = bearing(k, corrs[2].pixel);
    const double ca = f2.dot(f3), cb = f1.dot(f3), cg = f1.dot(f2);
    const double a2 = (P2 - P3).squaredNorm(), b2 = (P1 - P3).squaredNorm(), c2 = (P1 - P2).squaredNorm();

    // Depths s1, s2 = u s1, s3 = v s1. Eliminating s1 from the three law-of-cosines
    // constraints leaves u = N(v) / D(v) and a quartic G(v) = 0.
    const Poly g_b = {1.0, -2.0 * cb, 1.0};  // 1 + v^2 - 2 v cb
    const Poly N = add(Poly{-b2, 0.0, b2}, g_b, c2 - a2);
    const Poly D = {-2.0 * b2 * cg, 2.0 * b2 * ca};
    // b2 (u^2 - 2 u cg + 1) - c2 (1 + v^2 - 2 v cb) = 0, multiplied by D^2.
    Poly G = add(mul(N, N), mul(N, D), -2.0 * cg);
    for (auto& g : G) g *= b2;
    G = add(G, mul(add(Poly{b2}, g_b, -c2), mul(D, D)));
    G.resize(5, 0.0);
    if (std::abs(G[4]) < 1e-14 * (std::abs(G[0]) + std::abs(G[1]) + std::abs(G[2]) + std::abs(G[3]) + 1e-300))
        throw DegenerateConfiguration("p3p: degenerate quartic");

    const Mat3 Fw = triangle_frame(P1, P2, P3);
    std::vector<ScenePose> out;
    for (const double v : quartic_real_roots(G)) {
        if (!(v > 0)) continue;
        const double den = eval(D, v);
        if (std::abs(den) < 1e-300) continue;
        const double u = eval(N, v) / den;
        if (!(u > 0)) continue;
        const double gb = eval(g_b, v);
        if (!(gb > 0)) continue;
        Eigen::Vector3d s;
        s[0] = std::sqrt(b2 / gb);
        s[1] = u * s[0];
        s[2] = v * s[0];
        // Newton polish on the three distance constraints.
        for (int it = 0; it < 3; ++it) {
            const Eigen::Vector3d r{s[1] * s[1] + s[2] * s[2] - 2 * s[1] * s[2] * ca - a2,
                                    s[0] * s[0] + s[2] * s[2] - 2 * s[0] * s[2] * cb - b2,
                                    s[0] * s[0] + s[1] * s[1] - 2 * s[0] * s[1] * cg - c2};
            Mat3 J;
            J << 0, 2 * s[1] - 2 * s[2] * ca, 2 * s[2] - 2 * s[1] * ca,  //
                2 * s[0] - 2 * s[2] * cb, 0, 2 * s[2] - 2 * s[0] * cb,   //
                2 * s[0] - 2 * s[1] * cg, 2 * s[1] - 2 * s[0] * cg, 0;
            const Eigen::Vector3d step = J.fullPivLu().solve(r);
            if (!step.allFinite()) break;
            s -= step;
        }
        if (!(s.minCoeff() > 0)) continue;
        const Eigen::Vector3d Q1 = s[0] * f1, Q2 = s[1] * f2, Q3 = s[2] * f3;
        const Mat3 R = triangle_frame(Q1, Q2, Q3) * Fw.transpose();
        const ScenePose pose(R, Q1 - R * P1);
        bool ok = true;
        for (const auto& c : corrs) ok = ok && std::sqrt(reprojection_error(k, pose, c)) <= kP3pResidualPx;
        if (!ok) continue;
        if (std::none_of(out.begin(), out.end(), [&](const ScenePose& q) { return same_pose(q, pose); }))
            out.push_back(pose);
    }
    return out;
}

ScenePose dlt_solve(const std::vector<Correspondence>& corrs, const CameraIntrinsics& k) {
    const std::size_t n = corrs.size();
    if (n < 6) throw DegenerateConfiguration("dlt: needs at least 6 correspondences");
    // Normalized image coordinates, then similarity normalization of both sides.
    std::vector<Eigen::Vector2d> xs(n);
    Eigen::Vector2d xc = Eigen::Vector2d::Zero();
    Point3 Xc = Point3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = {(corrs[i].pixel.x() - k.cx) / k.fx, (corrs[i].pixel.y() - k.cy) / k.fy};
        xc += xs[i];
        Xc += corrs[i].world;
    }
    xc /= static_cast<double>(n);
    Xc /= static_cast<double>(n);
    double xs_scale = 0.0, Xs_scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xs_scale += (xs[i] - xc).norm();
        Xs_scale += (corrs[i].world - Xc).norm();
    }
    xs_scale = std::sqrt(2.0) * static_cast<double>(n) / xs_scale;
    Xs_scale = std::sqrt(3.0) * static_cast<double>(n) / Xs_scale;
    if (!std::isfinite(xs_scale) || !std::isfinite(Xs_scale))
        throw DegenerateConfiguration("dlt: coincident points");

    Eigen::MatrixXd A(2 * n, 12);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d x = (xs[i] - xc) * xs_scale;
        Eigen::Vector4d X;
        X << (corrs[i].world - Xc) * Xs_scale, 1.0;
        A.row(2 * i) << X.transpose(), Eigen::RowVector4d::Zero(), -x.x() * X.transpose();
        A.row(2 * i + 1) << Eigen::RowVector4d::Zero(), X.transpose(), -x.y() * X.transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv.size() < 12 || sv[10] < kDltGapTol * sv[0])
        throw RankDeficient("dlt: design matrix null space is not one-dimensional");
    const Eigen::VectorXd p = svd.matrixV().col(11);
    Eigen::Matrix<double, 3, 4> Pn;
    Pn << p.segment<4>(0).transpose(), p.segment<4>(4).transpose(), p.segment<4>(8).transpose();

    // Undo normalization: P = T_img^-1 * Pn * T_world.
    Mat3 Ti_inv = Mat3::Identity();
    Ti_inv(0, 0) = Ti_inv(1, 1) = 1.0 / xs_scale;
    Ti_inv(0, 2) = xc.x();
    Ti_inv(1, 2) = xc.y();
    Eigen::Matrix4d Tw = Eigen::Matrix4d::Identity();
    Tw.topLeftCorner<3, 3>() *= Xs_scale;
    Tw.topRightCorner<3, 1>() = -Xs_scale * Xc;
    Eigen::Matrix<double, 3, 4> P = Ti_inv * Pn * Tw;

    // Sign so that the majority of points lie in front.
    int front = 0;
    for (const auto& c : corrs) front += (P.row(2).head<3>().dot(c.world) + P(2, 3) > 0) ? 1 : -1;
    if (front < 0) P = -P;

    const Mat3 M = P.leftCols<3>();
    Eigen::JacobiSVD<Mat3> rs(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 U = rs.matrixU();
    const Mat3 V = rs.matrixV();
    if ((U * V.transpose()).determinant() < 0) U.col(2) = -U.col(2);
    const Mat3 R = U * V.transpose();
    const double scale = rs.singularValues().mean();
    if (!(scale > 0)) throw DegenerateConfiguration("dlt: zero camera matrix");
    const ScenePose pose(R, P.col(3) / scale);
    for (const auto& c : corrs)
        if (!(pose.to_camera(c.world).z() > 0)) throw DegenerateConfiguration("dlt: points on both sides of camera");
    return pose;
}

RefineResult refine_pose_traced(const ScenePose& initial, const std::vector<Correspondence>& inliers,
                                const CameraIntrinsics& k, int iterations) {
    if (inliers.size() < 4) throw TooFewInliers(inliers.size());
    const auto objective = [&](const Mat3& R, const Eigen::Vector3d& t) {
        double sum = 0.0;
        for (const auto& c : inliers) {
            const Eigen::Vector3d Xc = R * c.world + t;
            if (!(Xc.z() > 1e-9)) return std::numeric_limits<double>::infinity();
            const double du = k.fx * Xc.x() / Xc.z() + k.cx - c.pixel.x();
            const double dv = k.fy * Xc.y() / Xc.z() + k.cy - c.pixel.y();
            sum += du * du + dv * dv;
        }
        return sum;
    };
    Mat3 R = initial.R();
    Eigen::Vector3d t = initial.translation;
    double f = objective(R, t);
    if (!std::isfinite(f)) throw BehindCamera();
    RefineResult out{initial, {f}};

    for (int it = 0; it < iterations; ++it) {
        Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        for (const auto& c : inliers) {
            const Eigen::Vector3d RX = R * c.world;
            const Eigen::Vector3d Xc = RX + t;
            const double iz = 1.0 / Xc.z();
            const Eigen::Vector2d r{k.fx * Xc.x() * iz + k.cx - c.pixel.x(), k.fy * Xc.y() * iz + k.cy - c.pixel.y()};
            Eigen::Matrix<double, 2, 3> Jp;
            Jp << k.fx * iz, 0, -k.fx * Xc.x() * iz * iz, 0, k.fy * iz, -k.fy * Xc.y() * iz * iz;
            // d Xc / d omega = -[RX]_x, d Xc / d t = I
            Mat3 skew;
            skew << 0, -RX.z(), RX.y(), RX.z(), 0, -RX.x(), -RX.y(), RX.x(), 0;
            Eigen::Matrix<double, 2, 6> J;
            J.leftCols<3>() = -Jp * skew;
            J.rightCols<3>() = Jp;
            H += J.transpose() * J;
            g += J.transpose() * r;
        }
        const Eigen::Matrix<double, 6, 1> delta = H.ldlt().solve(-g);
        if (!delta.allFinite()) break;
        double step = 1.0;
        bool accepted = false;
        for (int halving = 0; halving <= 10; ++halving, step *= 0.5) {
            const Mat3 dR = exp_so3(step * delta.head<3>());
            const Mat3 R_new = dR * R;
            const Eigen::Vector3d t_new = t + step * delta.tail<3>();
            const double f_new = objective(R_new, t_new);
            if (f_new < f) {
                R = R_new;
                t = t_new;
                f = f_new;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        out.objective.push_back(f);
        out.pose = ScenePose(R, t);
    }
    return out;
}

ScenePose refine_pose(const ScenePose& initial, const std::vector<Correspondence>& inliers, const CameraIntrinsics& k,
                      int iterations) {
    return refine_pose_traced(initial, inliers, k, iterations).pose;
}

PoseEstimate ransac_pnp(const std::vector<Correspondence>& corrs, const CameraIntrinsics& k, const RansacConfig& cfg) {
    if (corrs.size() < 4) throw TooFewCorrespondences(corrs.size());
    if (cfg.iterations < 1 || !(cfg.inlier_threshold_px > 0))
        throw std::invalid_argument("ransac_pnp: iterations >= 1 and threshold > 0 required");
    const double thresh_sq = cfg.inlier_threshold_px * cfg.inlier_threshold_px;
    const std::uint64_t n = corrs.size();
    Rng rng(cfg.seed);

    bool have = false;
    Scored best;
    ScenePose best_pose;
    std::vector<Correspondence> sample(3);
    for (int round = 0; round < cfg.iterations; ++round) {
        std::array<std::uint64_t, 3> idx{};
        idx[0] = rng.uniform_int(n);
        do idx[1] = rng.uniform_int(n); while (idx[1] == idx[0]);
        do idx[2] = rng.uniform_int(n); while (idx[2] == idx[0] || idx[2] == idx[1]);
        for (int j = 0; j < 3; ++j) sample[j] = corrs[idx[j]];
        std::vector<ScenePose> candidates;
        try {
            candidates = p3p_solve(sample, k);
        } catch (const DegenerateConfiguration&) {
            continue;
        }
        for (const auto& cand : candidates) {
            const Scored s = score(corrs, k, cand, thresh_sq, nullptr);
            if (!have || better(s, best)) {
                have = true;
                best = s;
                best_pose = cand;
            }
        }
    }
    if (!have) throw NoValidHypothesis();

    PoseEstimate est;
    est.hypothesis = best_pose;
    est.hypothesis_inlier_count = best.count;
    est.hypothesis_mean_error = best.mean();
    std::vector<bool> mask;
    score(corrs, k, best_pose, thresh_sq, &mask);
    est.pose = best_pose;
    est.inlier_mask = mask;
    est.inlier_count = best.count;
    est.mean_inlier_error = best.mean();

    // Local optimization: refine on the inliers and re-score, while the
    // inlier set keeps changing. Kept only if it is not worse than the hypothesis.
    ScenePose current = best_pose;
    std::vector<bool> current_mask = mask;
    for (int round = 0; round < 4; ++round) {
        std::vector<Correspondence> inl;
        for (std::size_t i = 0; i < corrs.size(); ++i)
            if (current_mask[i]) inl.push_back(corrs[i]);
        if (inl.size() < 4) break;
        ScenePose refined;
        try {
            refined = refine_pose(current, inl, k, cfg.refine_iterations);
        } catch (const Error&) {
            break;
        }
        std::vector<bool> new_mask;
        const Scored s = score(corrs, k, refined, thresh_sq, &new_mask);
        const bool stable = new_mask == current_mask;
        current = refined;
        current_mask = new_mask;
        if (s.count >= est.hypothesis_inlier_count && s.mean() <= est.hypothesis_mean_error) {
            est.pose = refined;
            est.inlier_mask = new_mask;
            est.inlier_count = s.count;
            est.mean_inlier_error = s.mean();
        }
        if (stable) break;
    }
    return est;
}

std::string format_estimate(std::int64_t image_id, const PoseEstimate& est) {
    char buf[128];
    std::snprintf(buf, sizeof buf, " inliers=%zu/%zu mean_err=%.17g", est.inlier_count, est.inlier_mask.size(),
                  est.mean_inlier_error);
    return format_pose_line(image_id, est.pose) + buf;
}

}  // namespace reloc

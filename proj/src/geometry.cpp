#include "reloc/geometry.hpp"

#include "reloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <string>

namespace reloc {

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;
constexpr double kMinDepth = 1e-9;

}  // namespace

bool CameraIntrinsics::valid() const {
    return fx > 0 && fy > 0 && width >= 1 && height >= 1 && cx >= 0 && cx < width && cy >= 0 &&
           cy < height && std::isfinite(fx) && std::isfinite(fy);
}

Mat3 CameraIntrinsics::matrix() const {
    Mat3 K;
    K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return K;
}

ScenePose::ScenePose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t)
    : rotation(q.normalized()), translation(t) {}

ScenePose::ScenePose(const Mat3& R, const Eigen::Vector3d& t)
    : rotation(Eigen::Quaterniond(R).normalized()), translation(t) {}

bool ScenePose::valid() const {
    if (std::abs(rotation.norm() - 1.0) > 1e-9) return false;
    const Mat3 Rm = R();
    if ((Rm * Rm.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) return false;
    return std::abs(Rm.determinant() - 1.0) <= 1e-9 && translation.allFinite();
}

Mat3 axis_angle_rotation(const Eigen::Vector3d& axis, double degrees) {
    return Eigen::AngleAxisd(degrees / kDeg, axis.normalized()).toRotationMatrix();
}

Mat3 exp_so3(const Eigen::Vector3d& omega) {
    const double theta = omega.norm();
    if (theta < 1e-300) return Mat3::Identity();
    return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Pixel2 project(const CameraIntrinsics& k, const ScenePose& pose, const Point3& X) {
    const Point3 Xc = pose.to_camera(X);
    if (!(Xc.z() > kMinDepth)) throw BehindCamera();
    return {k.fx * Xc.x() / Xc.z() + k.cx, k.fy * Xc.y() / Xc.z() + k.cy};
}

Point3 backproject(const CameraIntrinsics& k, const ScenePose& pose, const Pixel2& p, double depth) {
    const Point3 Xc{(p.x() - k.cx) / k.fx * depth, (p.y() - k.cy) / k.fy * depth, depth};
    return pose.rotation.conjugate() * (Xc - pose.translation);
}

PoseError pose_errors(const ScenePose& est, const ScenePose& gt) {
    PoseError e;
    e.translation = (est.center() - gt.center()).norm();
    // Equals arccos(clamp((tr - 1) / 2)); the atan2 form keeps full precision near identity.
    const Mat3 rel = est.R() * gt.R().transpose();
    const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
    const Eigen::Vector3d axis{rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1)};
    e.rotation_deg = std::atan2(0.5 * axis.norm(), c) * kDeg;
    return e;
}

ScenePose compose_inplane_rotation(const ScenePose& pose, double theta_deg) {
    const Mat3 Rz = axis_angle_rotation(Eigen::Vector3d::UnitZ(), theta_deg);
    return ScenePose(Eigen::Quaterniond(Rz) * pose.rotation, Rz * pose.translation);
}

CameraIntrinsics scale_intrinsics(const CameraIntrinsics& k, double s) {
    CameraIntrinsics out = k;
    out.fx *= s;
    out.fy *= s;
    out.cx *= s;
    out.cy *= s;
    out.width = std::max(1, static_cast<int>(std::lround(k.width * s)));
    out.height = std::max(1, static_cast<int>(std::lround(k.height * s)));
    return out;
}

std::string format_pose_line(std::int64_t image_id, const ScenePose& pose) {
    char buf[512];
    const auto& q = pose.rotation;
    const auto& t = pose.translation;
    std::snprintf(buf, sizeof buf, "%lld %.17g %.17g %.17g %.17g %.17g %.17g %.17g",
                  static_cast<long long>(image_id), q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z());
    return buf;
}

std::pair<std::int64_t, ScenePose> parse_pose_line(const std::string& line) {
    std::istringstream in(line);
    long long id = 0;
    double w, x, y, z, tx, ty, tz;
    if (!(in >> id >> w >> x >> y >> z >> tx >> ty >> tz)) throw ParseError(1, "malformed pose line");
    std::string extra;
    if (in >> extra) throw ParseError(1, "trailing tokens on pose line");
    ScenePose pose;
    pose.rotation = Eigen::Quaterniond(w, x, y, z);
    pose.translation = {tx, ty, tz};
    return {id, pose};
}

}  // namespace reloc

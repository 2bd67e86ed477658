#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <string>

namespace reloc {

using Pixel2 = Eigen::Vector2d;  // (u, v): u along columns, v along rows; integer values are cell centers
using Point3 = Eigen::Vector3d;  // world coordinates
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics without distortion.
struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    bool valid() const;
    Mat3 matrix() const;
    bool operator==(const CameraIntrinsics&) const = default;
};

/// World-to-camera rigid transform: X_cam = R * X_world + t.
struct ScenePose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    ScenePose() = default;
    ScenePose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);
    ScenePose(const Mat3& R, const Eigen::Vector3d& t);

    Mat3 R() const { return rotation.toRotationMatrix(); }
    Point3 to_camera(const Point3& X) const { return rotation * X + translation; }
    /// Camera center in world coordinates, C = -R^T t.
    Point3 center() const { return -(rotation.conjugate() * translation); }

    bool valid() const;
};

/// Rotation about axis (unnormalized) by angle in degrees.
Mat3 axis_angle_rotation(const Eigen::Vector3d& axis, double degrees);
/// Rodrigues exponential map of an axis-angle vector (radians).
Mat3 exp_so3(const Eigen::Vector3d& omega);

/// Projects a world point; throws BehindCamera when camera depth <= 1e-9.
Pixel2 project(const CameraIntrinsics& k, const ScenePose& pose, const Point3& X);

/// World point at camera depth `depth` along the ray through pixel p.
Point3 backproject(const CameraIntrinsics& k, const ScenePose& pose, const Pixel2& p, double depth);

struct PoseError {
    double translation = 0.0;  // camera-center distance, scene units
    double rotation_deg = 0.0;
};

PoseError pose_errors(const ScenePose& est, const ScenePose& gt);

/// Rotates the camera about its optical axis by theta degrees. With fx == fy
/// this matches rotating the image by theta about the principal point.
ScenePose compose_inplane_rotation(const ScenePose& pose, double theta_deg);

/// Scales every intrinsic (including image size, rounded, min 1) by s.
CameraIntrinsics scale_intrinsics(const CameraIntrinsics& k, double s);

/// Integer cell of a sub-pixel coordinate (round half up).
inline int to_cell(double x) { return static_cast<int>(std::floor(x + 0.5)); }

/// `image_id qw qx qy qz tx ty tz` with 17 significant digits.
std::string format_pose_line(std::int64_t image_id, const ScenePose& pose);
/// Inverse of format_pose_line; throws ParseError(1, ...) on malformed input.
std::pair<std::int64_t, ScenePose> parse_pose_line(const std::string& line);

}  // namespace reloc

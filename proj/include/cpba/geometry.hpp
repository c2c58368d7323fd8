#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "cpba/error.hpp"

namespace cpba {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;

// ---------------------------------------------------------------------------
// SO(3) helpers
// ---------------------------------------------------------------------------

Mat3 skew(const Vec3& v);
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& R);
Eigen::Quaterniond quat_exp(const Vec3& omega);
/// Inverse of the right Jacobian of SO(3): Log(Exp(phi) Exp(d)) ~ phi + Jr^-1(phi) d.
Mat3 so3_right_jacobian_inv(const Vec3& phi);

/// Orthonormal basis of the plane orthogonal to a unit vector, built from the
/// Householder reflection that maps e_z onto the vector. Deterministic in its
/// input, so tangent coordinates are reproducible across runs.
Mat32 tangent_basis(const Vec3& unit);

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

/// Camera pose T_wc: maps camera coordinates into the world frame. The
/// translation is the camera centre in world coordinates.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from(const Mat3& R, const Vec3& t);

  Mat3 R() const { return rotation.toRotationMatrix(); }
  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  /// World point into camera coordinates (applies the inverse transform).
  Vec3 to_camera(const Vec3& p_world) const;
};

/// Tangent ordering is (translation, rotation). Translation increments add in
/// the world frame; rotation increments right-multiply: R' = R Exp(dtheta).
Pose pose_boxplus(const Pose& p, const Vec6& delta);
/// Returns delta such that pose_boxplus(base, delta) == p.
Vec6 pose_boxminus(const Pose& p, const Pose& base);

double rotation_angle(const Pose& p);

// ---------------------------------------------------------------------------
// Camera
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
  Mat3 matrix() const;
  /// Cofactor of K: maps a camera-frame line moment to the pixel line.
  Mat3 line_matrix() const;
  Vec2 project(const Vec3& p_cam) const;
};

/// K^-1 (u, v, 1); third component is exactly 1.
Vec3 backproject(const CameraIntrinsics& K, const Vec2& pixel);

// ---------------------------------------------------------------------------
// Plane
// ---------------------------------------------------------------------------

/// n . X + d = 0 with |n| = 1.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  /// Normalises (normal, offset) by |normal|.
  static Plane from_coefficients(const Vec3& normal, double offset);
  Vec4 coeffs() const { return {normal.x(), normal.y(), normal.z(), offset}; }
  double signed_distance(const Vec3& X) const { return normal.dot(X) + offset; }
};

/// First two delta components move the normal along the sphere in the basis
/// tangent_basis(normal); the third adds to the offset.
Plane plane_boxplus(const Plane& pl, const Vec3& delta);
Vec3 plane_boxminus(const Plane& pl, const Plane& base);

/// Expresses a world plane in the frame of camera T_wc.
Plane plane_to_camera(const Plane& world, const Pose& T_wc);
Plane plane_to_world(const Plane& camera, const Pose& T_wc);

// ---------------------------------------------------------------------------
// Lines
// ---------------------------------------------------------------------------

/// Plücker line: moment = p x direction for any point p on the line.
struct PluckerLine {
  Vec3 moment = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();

  static PluckerLine through(const Vec3& a, const Vec3& b);
  double klein() const { return moment.dot(direction); }
  /// Point on the line closest to the origin.
  Vec3 closest_point_to_origin() const;
  Vec3 closest_point_to(const Vec3& x) const;
};

/// Minimal 4-DoF line: frame U in SO(3) and angle phi with
/// (w1, w2) = (cos phi, sin phi) proportional to (|moment|, |direction|).
struct OrthonormalLine {
  Mat3 frame = Mat3::Identity();
  double angle = 0.0;
};

PluckerLine transform_line(const Pose& T, const PluckerLine& l);
OrthonormalLine plucker_to_orthonormal(const PluckerLine& l);
/// Recovers the line normalised so that |moment|^2 + |direction|^2 = 1.
PluckerLine orthonormal_to_plucker(const OrthonormalLine& o);
/// delta = (dtheta in so(3), dphi); U' = U Exp(dtheta), phi' = phi + dphi.
OrthonormalLine line_boxplus(const OrthonormalLine& o, const Eigen::Vector4d& delta);
Eigen::Vector4d line_boxminus(const OrthonormalLine& o, const OrthonormalLine& base);

}  // namespace cpba

#pragma once

#include <array>
#include <span>
#include <variant>

#include <Eigen/Core>

#include "cpba/geometry.hpp"

namespace cpba {

using Mat4 = Eigen::Matrix4d;

struct EuclideanPoint {
  Vec3 position = Vec3::Zero();
};

/// Point stored as the inverse of its depth along the anchor camera's ray
/// through anchor_pixel. The anchor pixel is held fixed.
struct InverseDepthPoint {
  int anchor_frame = 0;
  Vec2 anchor_pixel = Vec2::Zero();
  double inverse_depth = 1.0;
};

/// Point whose position is the intersection of the anchor ray with a plane
/// block. No free parameters of its own.
struct CoPlanarPoint {
  int plane_id = 0;
  int anchor_frame = 0;
  Vec2 anchor_pixel = Vec2::Zero();
};

/// Line given by the intersection of a plane block with the back-projection
/// plane of its anchor observation. No free parameters of its own.
struct CoPlanarLine {
  int plane_id = 0;
  int anchor_frame = 0;
  std::array<Vec2, 2> anchor_endpoints{Vec2::Zero(), Vec2::Zero()};
};

using LandmarkParam =
    std::variant<EuclideanPoint, InverseDepthPoint, OrthonormalLine, CoPlanarPoint, CoPlanarLine>;

/// 3 / 1 / 4 / 0 / 0 for the alternatives above, in order.
int landmark_tangent_dim(const LandmarkParam& p);
bool is_line_landmark(const LandmarkParam& p);
bool is_coplanar_landmark(const LandmarkParam& p);

/// Depth h along the pixel's normalised ray (z = 1) at which the ray meets a
/// plane given in the same camera frame: h n^T K^-1 (u, v, 1) + d = 0.
double depth_from_plane(const Plane& plane_in_camera, const CameraIntrinsics& K, const Vec2& pixel);

Vec3 inverse_depth_position(const InverseDepthPoint& p, const Pose& anchor_pose,
                            const CameraIntrinsics& K);

Vec3 coplanar_point_position(const CoPlanarPoint& p, const Plane& plane_world,
                             const Pose& anchor_pose, const CameraIntrinsics& K);

/// Dual Plücker matrix a b^T - b a^T of two planes given as 4-vectors.
Mat4 dual_plucker_matrix(const Vec4& a, const Vec4& b);

/// Line of intersection of two planes (4-vectors, any positive scale).
/// Throws kDegenerateIntersection when the planes are parallel.
PluckerLine intersect_planes(const Vec4& a, const Vec4& b);

/// World-frame plane through the camera centre and the two endpoint rays,
/// unit normal.
Plane backprojection_plane(const Pose& T_wc, const CameraIntrinsics& K,
                           const std::array<Vec2, 2>& endpoints);

PluckerLine coplanar_line_plucker(const CoPlanarLine& l, const Plane& plane_world,
                                  const Pose& anchor_pose, const CameraIntrinsics& K);

struct LineObservation {
  Pose pose;
  std::array<Vec2, 2> endpoints{Vec2::Zero(), Vec2::Zero()};
};

/// Two-view line triangulation by intersecting back-projection planes.
/// Throws kLowParallax when the planes meet at less than min_angle radians.
PluckerLine triangulate_line(const LineObservation& a, const LineObservation& b,
                             const CameraIntrinsics& K, double min_angle = 1e-4);

/// Least-squares line from any number of views: the intersection of the two
/// dominant right singular vectors of the stacked back-projection planes.
PluckerLine triangulate_line_multiview(std::span<const LineObservation> obs,
                                       const CameraIntrinsics& K, double min_angle = 1e-4);

struct PointObservation {
  Pose pose;
  Vec2 pixel = Vec2::Zero();
};

/// Point minimising the summed squared distance to all viewing rays.
Vec3 triangulate_point(std::span<const PointObservation> obs, const CameraIntrinsics& K,
                       double min_angle = 1e-4);

}  // namespace cpba

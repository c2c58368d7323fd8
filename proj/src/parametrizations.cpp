#include "cpba/parametrizations.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace cpba {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double unsigned_plane_angle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), std::abs(a.dot(b)));
}

}  // namespace

int landmark_tangent_dim(const LandmarkParam& p) {
  return std::visit(overloaded{
                        [](const EuclideanPoint&) { return 3; },
                        [](const InverseDepthPoint&) { return 1; },
                        [](const OrthonormalLine&) { return 4; },
                        [](const CoPlanarPoint&) { return 0; },
                        [](const CoPlanarLine&) { return 0; },
                    },
                    p);
}

bool is_line_landmark(const LandmarkParam& p) {
  return std::holds_alternative<OrthonormalLine>(p) || std::holds_alternative<CoPlanarLine>(p);
}

bool is_coplanar_landmark(const LandmarkParam& p) {
  return std::holds_alternative<CoPlanarPoint>(p) || std::holds_alternative<CoPlanarLine>(p);
}

double depth_from_plane(const Plane& plane_in_camera, const CameraIntrinsics& K, const Vec2& pixel) {
  const Vec3 ray = backproject(K, pixel);
  const double denom = plane_in_camera.normal.dot(ray);
  if (std::abs(denom) < 1e-9) {
    throw Error(ErrorCode::kRayParallelToPlane, "viewing ray is parallel to the plane");
  }
  return -plane_in_camera.offset / denom;
}

Vec3 inverse_depth_position(const InverseDepthPoint& p, const Pose& anchor_pose,
                            const CameraIntrinsics& K) {
  return anchor_pose * (backproject(K, p.anchor_pixel) / p.inverse_depth);
}

Vec3 coplanar_point_position(const CoPlanarPoint& p, const Plane& plane_world,
                             const Pose& anchor_pose, const CameraIntrinsics& K) {
  const Plane local = plane_to_camera(plane_world, anchor_pose);
  const double h = depth_from_plane(local, K, p.anchor_pixel);
  return anchor_pose * (h * backproject(K, p.anchor_pixel));
}

Mat4 dual_plucker_matrix(const Vec4& a, const Vec4& b) {
  return a * b.transpose() - b * a.transpose();
}

PluckerLine intersect_planes(const Vec4& a, const Vec4& b) {
  const Mat4 L = dual_plucker_matrix(a, b);
  // L = [[d]x, m; -m^T, 0]
  PluckerLine line;
  line.direction = Vec3(L(2, 1), L(0, 2), L(1, 0));
  line.moment = L.block<3, 1>(0, 3);
  const double scale = a.head<3>().norm() * b.head<3>().norm();
  if (!(line.direction.norm() > 1e-12 * scale)) {
    throw Error(ErrorCode::kDegenerateIntersection, "planes are parallel");
  }
  return line;
}

Plane backprojection_plane(const Pose& T_wc, const CameraIntrinsics& K,
                           const std::array<Vec2, 2>& endpoints) {
  const Vec3 n_cam = backproject(K, endpoints[0]).cross(backproject(K, endpoints[1]));
  const double len = n_cam.norm();
  if (!(len > 0.0)) throw Error(ErrorCode::kDegenerateLine, "line endpoints coincide");
  return plane_to_world(Plane{n_cam / len, 0.0}, T_wc);
}

PluckerLine coplanar_line_plucker(const CoPlanarLine& l, const Plane& plane_world,
                                  const Pose& anchor_pose, const CameraIntrinsics& K) {
  const Plane obs = backprojection_plane(anchor_pose, K, l.anchor_endpoints);
  return intersect_planes(obs.coeffs(), plane_world.coeffs());
}

PluckerLine triangulate_line(const LineObservation& a, const LineObservation& b,
                             const CameraIntrinsics& K, double min_angle) {
  const Plane pa = backprojection_plane(a.pose, K, a.endpoints);
  const Plane pb = backprojection_plane(b.pose, K, b.endpoints);
  // Also catches a line through both camera centres: both views then see the
  // same plane.
  if (!(unsigned_plane_angle(pa.normal, pb.normal) > min_angle)) {
    throw Error(ErrorCode::kLowParallax, "back-projection planes are nearly parallel");
  }
  return intersect_planes(pa.coeffs(), pb.coeffs());
}

PluckerLine triangulate_line_multiview(std::span<const LineObservation> obs,
                                       const CameraIntrinsics& K, double min_angle) {
  if (obs.size() < 2) throw Error(ErrorCode::kLowParallax, "need at least two line observations");
  // Planes are expressed about the mean camera centre and scaled so that the
  // offset column is comparable to the normals.
  Vec3 c0 = Vec3::Zero();
  for (const auto& o : obs) c0 += o.pose.translation;
  c0 /= static_cast<double>(obs.size());
  std::vector<Plane> planes;
  double scale = 0.0;
  for (const auto& o : obs) {
    planes.push_back(backprojection_plane(o.pose, K, o.endpoints));
    scale += std::pow(planes.back().signed_distance(c0), 2);
  }
  scale = std::sqrt(scale / static_cast<double>(obs.size()));
  if (!(scale > 1e-9)) scale = 1.0;
  Eigen::MatrixXd A(obs.size(), 4);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    A.row(static_cast<Eigen::Index>(i)) << planes[i].normal.transpose(), planes[i].signed_distance(c0) / scale;
  }
  double widest = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < A.rows(); ++j) {
      widest = std::max(widest, unsigned_plane_angle(A.row(i).head<3>().transpose(),
                                                     A.row(j).head<3>().transpose()));
    }
  }
  if (!(widest > min_angle)) {
    throw Error(ErrorCode::kLowParallax, "back-projection planes are nearly parallel");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Vec4 p = svd.matrixV().col(0);
  const Vec4 q = svd.matrixV().col(1);
  const PluckerLine local = intersect_planes(p, q);
  return PluckerLine{scale * local.moment + c0.cross(local.direction), local.direction};
}

Vec3 triangulate_point(std::span<const PointObservation> obs, const CameraIntrinsics& K,
                       double min_angle) {
  if (obs.size() < 2) throw Error(ErrorCode::kLowParallax, "need at least two point observations");
  Mat3 A = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  std::vector<Vec3> rays;
  rays.reserve(obs.size());
  for (const auto& o : obs) {
    const Vec3 w = (o.pose.rotation * backproject(K, o.pixel)).normalized();
    const Mat3 P = Mat3::Identity() - w * w.transpose();
    A += P;
    b += P * o.pose.translation;
    rays.push_back(w);
  }
  double widest = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (std::size_t j = i + 1; j < rays.size(); ++j) {
      widest = std::max(widest, std::atan2(rays[i].cross(rays[j]).norm(), rays[i].dot(rays[j])));
    }
  }
  if (!(widest > min_angle)) throw Error(ErrorCode::kLowParallax, "viewing rays are nearly parallel");
  return A.ldlt().solve(b);
}

}  // namespace cpba

#include "cpba/geometry.hpp"

#include <cmath>
#include <string>

namespace cpba {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid input";
    case ErrorCode::kDegenerateLine: return "degenerate line";
    case ErrorCode::kRayParallelToPlane: return "ray parallel to plane";
    case ErrorCode::kDegenerateIntersection: return "degenerate intersection";
    case ErrorCode::kLowParallax: return "low parallax";
    case ErrorCode::kBehindCamera: return "behind camera";
    case ErrorCode::kDegenerateProjection: return "degenerate projection";
    case ErrorCode::kEmptyProblem: return "empty problem";
    case ErrorCode::kRankDeficient: return "rank deficient";
    case ErrorCode::kInvalidInitialization: return "invalid initialization";
    case ErrorCode::kSceneGeneration: return "scene generation";
    case ErrorCode::kConfigParse: return "config parse";
  }
  return "unknown";
}

namespace {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v, const char* what) {
  if (!v.allFinite()) throw Error(ErrorCode::kInvalidInput, std::string(what) + " is not finite");
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return S;
}

Eigen::Quaterniond quat_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const double half = 0.5 * theta;
  double w, k;
  if (theta < 1e-8) {
    w = 1.0 - theta * theta / 8.0;
    k = 0.5 - theta * theta / 48.0;
  } else {
    w = std::cos(half);
    k = std::sin(half) / theta;
  }
  return Eigen::Quaterniond(w, k * omega.x(), k * omega.y(), k * omega.z()).normalized();
}

Mat3 so3_exp(const Vec3& omega) { return quat_exp(omega).toRotationMatrix(); }

Vec3 so3_log(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-10) {
    // atan2(s, w) ~ s / w for small s.
    return 2.0 * v / q.w();
  }
  const double theta = 2.0 * std::atan2(s, q.w());
  return theta / s * v;
}

Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 S = skew(phi);
  if (theta < 1e-6) return Mat3::Identity() + 0.5 * S + (1.0 / 12.0) * S * S;
  const double coeff =
      1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * S + coeff * S * S;
}

Mat32 tangent_basis(const Vec3& unit) {
  const double s = unit.z() >= 0.0 ? 1.0 : -1.0;
  Vec3 v = unit;
  v.z() += s;
  const Mat3 H = Mat3::Identity() - 2.0 * v * v.transpose() / v.squaredNorm();
  return H.leftCols<2>();
}

// ---------------------------------------------------------------------------

Pose Pose::from(const Mat3& R, const Vec3& t) {
  Pose p;
  p.rotation = Eigen::Quaterniond(R).normalized();
  p.translation = t;
  return p;
}

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.conjugate();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.rotation = (rotation * other.rotation).normalized();
  out.translation = rotation * other.translation + translation;
  return out;
}

Vec3 Pose::to_camera(const Vec3& p_world) const {
  return rotation.conjugate() * (p_world - translation);
}

Pose pose_boxplus(const Pose& p, const Vec6& delta) {
  require_finite(delta, "pose increment");
  Pose out;
  out.translation = p.translation + delta.head<3>();
  out.rotation = (p.rotation * quat_exp(delta.tail<3>())).normalized();
  return out;
}

Vec6 pose_boxminus(const Pose& p, const Pose& base) {
  Vec6 d;
  d.head<3>() = p.translation - base.translation;
  d.tail<3>() = so3_log(base.R().transpose() * p.R());
  return d;
}

double rotation_angle(const Pose& p) { return so3_log(p.R()).norm(); }

// ---------------------------------------------------------------------------

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy) ||
      !std::isfinite(fx) || !std::isfinite(fy)) {
    throw Error(ErrorCode::kInvalidInput, "camera intrinsics require fx > 0 and fy > 0");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 K;
  K << fx, 0.0, cx,
       0.0, fy, cy,
       0.0, 0.0, 1.0;
  return K;
}

Mat3 CameraIntrinsics::line_matrix() const {
  Mat3 L;
  L << fy, 0.0, 0.0,
       0.0, fx, 0.0,
       -fy * cx, -fx * cy, fx * fy;
  return L;
}

Vec2 CameraIntrinsics::project(const Vec3& p_cam) const {
  return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
}

Vec3 backproject(const CameraIntrinsics& K, const Vec2& pixel) {
  return {(pixel.x() - K.cx) / K.fx, (pixel.y() - K.cy) / K.fy, 1.0};
}

// ---------------------------------------------------------------------------

Plane Plane::from_coefficients(const Vec3& normal, double offset) {
  const double n = normal.norm();
  if (!(n > 0.0) || !std::isfinite(n) || !std::isfinite(offset)) {
    throw Error(ErrorCode::kInvalidInput, "plane normal must be finite and non-zero");
  }
  return Plane{normal / n, offset / n};
}

Plane plane_boxplus(const Plane& pl, const Vec3& delta) {
  require_finite(delta, "plane increment");
  const Vec3 v = tangent_basis(pl.normal) * delta.head<2>();
  const double theta = v.norm();
  Plane out;
  if (theta < 1e-12) {
    out.normal = (pl.normal + v).normalized();
  } else {
    out.normal = (std::cos(theta) * pl.normal + std::sin(theta) / theta * v).normalized();
  }
  out.offset = pl.offset + delta.z();
  return out;
}

Vec3 plane_boxminus(const Plane& pl, const Plane& base) {
  const double c = base.normal.dot(pl.normal);
  const Vec3 w = pl.normal - c * base.normal;
  const double s = w.norm();
  Vec3 v = w;
  if (s > 1e-15) v = std::atan2(s, c) / s * w;
  Vec3 out;
  out.head<2>() = tangent_basis(base.normal).transpose() * v;
  out.z() = pl.offset - base.offset;
  return out;
}

Plane plane_to_camera(const Plane& world, const Pose& T_wc) {
  return Plane{T_wc.rotation.conjugate() * world.normal,
               world.offset + world.normal.dot(T_wc.translation)};
}

Plane plane_to_world(const Plane& camera, const Pose& T_wc) {
  const Vec3 n = T_wc.rotation * camera.normal;
  return Plane{n, camera.offset - n.dot(T_wc.translation)};
}

// ---------------------------------------------------------------------------

PluckerLine PluckerLine::through(const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  return PluckerLine{a.cross(d), d};
}

Vec3 PluckerLine::closest_point_to_origin() const {
  return direction.cross(moment) / direction.squaredNorm();
}

Vec3 PluckerLine::closest_point_to(const Vec3& x) const {
  const Vec3 p0 = closest_point_to_origin();
  const Vec3 u = direction.normalized();
  return p0 + (x - p0).dot(u) * u;
}

PluckerLine transform_line(const Pose& T, const PluckerLine& l) {
  const Vec3 d = T.rotation * l.direction;
  return PluckerLine{T.rotation * l.moment + T.translation.cross(d), d};
}

OrthonormalLine plucker_to_orthonormal(const PluckerLine& l) {
  const double dn = l.direction.norm();
  if (!(dn > 0.0) || !std::isfinite(dn)) {
    throw Error(ErrorCode::kDegenerateLine, "line direction is zero");
  }
  const Vec3 u2 = l.direction / dn;
  const Vec3 m_perp = l.moment - l.moment.dot(u2) * u2;
  const double mn = m_perp.norm();
  Vec3 u1;
  if (mn <= 1e-14 * dn) {
    // Line through the origin: complete the direction deterministically.
    u1 = tangent_basis(u2).col(0);
  } else {
    u1 = m_perp / mn;
  }
  OrthonormalLine o;
  o.frame.col(0) = u1;
  o.frame.col(1) = u2;
  o.frame.col(2) = u1.cross(u2);
  o.angle = std::atan2(dn, mn);
  return o;
}

PluckerLine orthonormal_to_plucker(const OrthonormalLine& o) {
  return PluckerLine{std::cos(o.angle) * o.frame.col(0), std::sin(o.angle) * o.frame.col(1)};
}

OrthonormalLine line_boxplus(const OrthonormalLine& o, const Eigen::Vector4d& delta) {
  require_finite(delta, "line increment");
  OrthonormalLine out;
  out.frame = Eigen::Quaterniond(o.frame * so3_exp(delta.head<3>())).normalized().toRotationMatrix();
  out.angle = o.angle + delta.w();
  return out;
}

Eigen::Vector4d line_boxminus(const OrthonormalLine& o, const OrthonormalLine& base) {
  Eigen::Vector4d d;
  d.head<3>() = so3_log(base.frame.transpose() * o.frame);
  d.w() = o.angle - base.angle;
  return d;
}

}  // namespace cpba

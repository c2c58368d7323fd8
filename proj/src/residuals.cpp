#include "cpba/residuals.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

namespace cpba {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using PartMat = Eigen::Matrix<double, 3, Eigen::Dynamic, 0, 3, 6>;

// World-space value of a point landmark together with its derivative with
// respect to each block it depends on.
struct PointValue {
  Vec3 X = Vec3::Zero();
  std::array<std::pair<BlockRef, PartMat>, 2> parts;
  int num_parts = 0;
};

struct LineValue {
  PluckerLine L;
  struct Part {
    BlockRef block;
    PartMat dm;
    PartMat dd;
  };
  std::array<Part, 2> parts;
  int num_parts = 0;
};

BlockRef pose_ref(int i) { return {BlockType::kPose, i}; }
BlockRef landmark_ref(int i) { return {BlockType::kLandmark, i}; }
BlockRef plane_ref(int i) { return {BlockType::kPlane, i}; }

const LandmarkParam& landmark_at(const State& state, int index) {
  if (index < 0 || index >= static_cast<int>(state.landmarks.size())) {
    throw Error(ErrorCode::kInvalidInput, "edge references a missing landmark " + std::to_string(index));
  }
  return state.landmarks[static_cast<std::size_t>(index)];
}

const Pose& pose_at(const State& state, int index) {
  if (index < 0 || index >= static_cast<int>(state.poses.size())) {
    throw Error(ErrorCode::kInvalidInput, "edge references a missing pose " + std::to_string(index));
  }
  return state.poses[static_cast<std::size_t>(index)];
}

const Plane& plane_at(const State& state, int index) {
  if (index < 0 || index >= static_cast<int>(state.planes.size())) {
    throw Error(ErrorCode::kInvalidInput, "edge references a missing plane " + std::to_string(index));
  }
  return state.planes[static_cast<std::size_t>(index)];
}

PointValue point_value(const State& state, int landmark, const CameraIntrinsics& K) {
  PointValue out;
  const LandmarkParam& param = landmark_at(state, landmark);
  if (const auto* e = std::get_if<EuclideanPoint>(&param)) {
    out.X = e->position;
    out.parts[0] = {landmark_ref(landmark), Mat3::Identity()};
    out.num_parts = 1;
  } else if (const auto* p = std::get_if<InverseDepthPoint>(&param)) {
    const Pose& anchor = pose_at(state, p->anchor_frame);
    const Mat3 Ra = anchor.R();
    const Vec3 ray = backproject(K, p->anchor_pixel);
    const Vec3 v = ray / p->inverse_depth;
    out.X = Ra * v + anchor.translation;
    PartMat dpose(3, 6);
    dpose << Mat3::Identity(), -Ra * skew(v);
    out.parts[0] = {pose_ref(p->anchor_frame), dpose};
    out.parts[1] = {landmark_ref(landmark),
                    -Ra * ray / (p->inverse_depth * p->inverse_depth)};
    out.num_parts = 2;
  } else if (const auto* c = std::get_if<CoPlanarPoint>(&param)) {
    const Pose& anchor = pose_at(state, c->anchor_frame);
    const Plane& plane = plane_at(state, c->plane_id);
    const Mat3 Ra = anchor.R();
    const Vec3 ray = backproject(K, c->anchor_pixel);
    const Vec3 w = Ra * ray;
    const Vec3& n = plane.normal;
    const Vec3& t = anchor.translation;
    const double s = n.dot(w);
    if (std::abs(s) < 1e-9) {
      throw Error(ErrorCode::kRayParallelToPlane, "anchor ray of co-planar point is parallel to its plane");
    }
    const double e = plane.offset + n.dot(t);
    out.X = t - w * (e / s);
    const Mat3 P = Mat3::Identity() - w * n.transpose() / s;
    PartMat dpose(3, 6);
    dpose << P, (e / s) * P * Ra * skew(ray);
    PartMat dplane(3, 3);
    dplane << -w * (t.transpose() / s - e * w.transpose() / (s * s)) * tangent_basis(n), -w / s;
    out.parts[0] = {pose_ref(c->anchor_frame), dpose};
    out.parts[1] = {plane_ref(c->plane_id), dplane};
    out.num_parts = 2;
  } else {
    throw Error(ErrorCode::kInvalidInput, "point edge references a line landmark");
  }
  return out;
}

// d(moment)/d(delta) and d(direction)/d(delta) of an orthonormal line.
std::pair<Mat34, Mat34> orthonormal_plucker_jacobian(const OrthonormalLine& o) {
  const double w1 = std::cos(o.angle);
  const double w2 = std::sin(o.angle);
  const Mat3& U = o.frame;
  Mat34 dm, dd;
  dm << -w1 * U * skew(Vec3::UnitX()), -w2 * U.col(0);
  dd << -w2 * U * skew(Vec3::UnitY()), w1 * U.col(1);
  return {dm, dd};
}

LineValue line_value(const State& state, int landmark, const CameraIntrinsics& K) {
  LineValue out;
  const LandmarkParam& param = landmark_at(state, landmark);
  if (const auto* o = std::get_if<OrthonormalLine>(&param)) {
    out.L = orthonormal_to_plucker(*o);
    const auto [dm, dd] = orthonormal_plucker_jacobian(*o);
    out.parts[0] = {landmark_ref(landmark), dm, dd};
    out.num_parts = 1;
  } else if (const auto* c = std::get_if<CoPlanarLine>(&param)) {
    const Pose& anchor = pose_at(state, c->anchor_frame);
    const Plane& plane = plane_at(state, c->plane_id);
    const Mat3 Ra = anchor.R();
    const Vec3 n_cam = backproject(K, c->anchor_endpoints[0]).cross(backproject(K, c->anchor_endpoints[1]));
    if (!(n_cam.norm() > 0.0)) throw Error(ErrorCode::kDegenerateLine, "anchor endpoints coincide");
    const Vec3 n_a = n_cam.normalized();
    const Vec3 n_l = Ra * n_a;
    const double d_l = -n_l.dot(anchor.translation);
    const Vec3& n_p = plane.normal;
    const double d_p = plane.offset;
    out.L = intersect_planes(Vec4(n_l.x(), n_l.y(), n_l.z(), d_l), plane.coeffs());

    const Mat3 A = -Ra * skew(n_a);  // d n_l / d theta_anchor
    PartMat dm_pose(3, 6), dd_pose(3, 6);
    dm_pose << n_p * n_l.transpose(), d_p * A + n_p * anchor.translation.transpose() * A;
    dd_pose << Mat3::Zero(), skew(n_p) * A;
    const Mat32 B = tangent_basis(n_p);
    PartMat dm_plane(3, 3), dd_plane(3, 3);
    dm_plane << -d_l * B, n_l;
    dd_plane << -skew(n_l) * B, Vec3::Zero();
    out.parts[0] = {pose_ref(c->anchor_frame), dm_pose, dd_pose};
    out.parts[1] = {plane_ref(c->plane_id), dm_plane, dd_plane};
    out.num_parts = 2;
  } else {
    throw Error(ErrorCode::kInvalidInput, "line edge references a point landmark");
  }
  return out;
}

Mat23 projection_jacobian(const CameraIntrinsics& K, const Vec3& Xc) {
  const double iz = 1.0 / Xc.z();
  Mat23 J;
  J << K.fx * iz, 0.0, -K.fx * Xc.x() * iz * iz,
       0.0, K.fy * iz, -K.fy * Xc.y() * iz * iz;
  return J;
}

Vec3 homogeneous(const Vec2& p) { return {p.x(), p.y(), 1.0}; }

// d r / d l for the endpoint-to-line distances.
Mat23 line_distance_jacobian(const Vec3& l, const std::array<Vec2, 2>& endpoints) {
  const double n2 = l.x() * l.x() + l.y() * l.y();
  const double n = std::sqrt(n2);
  Mat23 J;
  for (int i = 0; i < 2; ++i) {
    const Vec3 p = homogeneous(endpoints[static_cast<std::size_t>(i)]);
    const double dist = p.dot(l);
    J.row(i) = p.transpose() / n - dist / (n2 * n) * Vec3(l.x(), l.y(), 0.0).transpose();
  }
  return J;
}

void evaluate_point_reproj(const ResidualEdge& e, const CameraIntrinsics& K, const State& state,
                           EdgeLinearization& lin, bool with_jacobians) {
  const auto& meas = std::get<PointMeasurement>(e.measurement);
  const Pose& pose = pose_at(state, e.frame);
  const PointValue pv = point_value(state, e.landmark, K);
  const Vec3 Xc = pose.to_camera(pv.X);
  lin.residual = point_residual(pose, pv.X, K, meas.pixel);
  if (!with_jacobians) return;
  const Mat23 dr_dXc = -projection_jacobian(K, Xc);
  const Mat3 Rt = pose.R().transpose();
  Mat26 Jpose;
  Jpose << dr_dXc * (-Rt), dr_dXc * skew(Xc);
  lin.add(pose_ref(e.frame), Jpose);
  const Eigen::Matrix<double, 2, 3> dr_dXw = dr_dXc * Rt;
  for (int i = 0; i < pv.num_parts; ++i) {
    lin.add(pv.parts[static_cast<std::size_t>(i)].first, dr_dXw * pv.parts[static_cast<std::size_t>(i)].second);
  }
}

void evaluate_line_reproj(const ResidualEdge& e, const CameraIntrinsics& K, const State& state,
                          EdgeLinearization& lin, bool with_jacobians) {
  const auto& meas = std::get<LineMeasurement>(e.measurement);
  const Pose& pose = pose_at(state, e.frame);
  const LineValue lv = line_value(state, e.landmark, K);
  const PluckerLine Lc = transform_line(pose.inverse(), lv.L);
  const Vec3 l = K.line_matrix() * Lc.moment;
  lin.residual = line_residual_image(l, meas.endpoints);
  if (!with_jacobians) return;
  const Mat3 R = pose.R();
  const Mat3 Rt = R.transpose();
  const Mat23 dr_dmc = line_distance_jacobian(l, meas.endpoints) * K.line_matrix();
  Mat26 Jpose;
  Jpose << dr_dmc * Rt * skew(lv.L.direction), dr_dmc * skew(Lc.moment);
  lin.add(pose_ref(e.frame), Jpose);
  const Mat3 Jt = -Rt * skew(pose.translation);
  for (int i = 0; i < lv.num_parts; ++i) {
    const auto& part = lv.parts[static_cast<std::size_t>(i)];
    lin.add(part.block, dr_dmc * (Rt * part.dm + Jt * part.dd));
  }
}

void evaluate_odometry(const ResidualEdge& e, const State& state, EdgeLinearization& lin,
                       bool with_jacobians) {
  const auto& meas = std::get<OdometryMeasurement>(e.measurement);
  const Pose& a = pose_at(state, e.frame);
  const Pose& b = pose_at(state, e.frame_b);
  const Vec6 r = odometry_residual(a, b, meas.relative);
  lin.residual = r;
  if (!with_jacobians) return;
  const Mat3 Ra = a.R();
  const Mat3 Rb = b.R();
  const Vec3 v = Ra.transpose() * (b.translation - a.translation);
  const Mat3 Jr_inv = so3_right_jacobian_inv(r.tail<3>());
  Eigen::Matrix<double, 6, 6> Ja = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 6> Jb = Eigen::Matrix<double, 6, 6>::Zero();
  Ja.topLeftCorner<3, 3>() = -Ra.transpose();
  Ja.topRightCorner<3, 3>() = skew(v);
  Ja.bottomRightCorner<3, 3>() = -Jr_inv * Rb.transpose() * Ra;
  Jb.topLeftCorner<3, 3>() = Ra.transpose();
  Jb.bottomRightCorner<3, 3>() = Jr_inv;
  lin.add(pose_ref(e.frame), Ja);
  lin.add(pose_ref(e.frame_b), Jb);
}

void evaluate_point_on_plane(const ResidualEdge& e, const CameraIntrinsics& K, const State& state,
                             EdgeLinearization& lin, bool with_jacobians) {
  const Plane& plane = plane_at(state, e.plane);
  const LandmarkParam& param = landmark_at(state, e.landmark);
  if (is_coplanar_landmark(param)) {
    throw Error(ErrorCode::kInvalidInput, "point-on-plane edge on a co-planar landmark");
  }
  const PointValue pv = point_value(state, e.landmark, K);
  ResidualVec r(1);
  r(0) = plane.signed_distance(pv.X);
  lin.residual = r;
  if (!with_jacobians) return;
  const Eigen::RowVector3d dr_dX = plane.normal.transpose();
  for (int i = 0; i < pv.num_parts; ++i) {
    lin.add(pv.parts[static_cast<std::size_t>(i)].first, dr_dX * pv.parts[static_cast<std::size_t>(i)].second);
  }
  JacobianMat Jplane(1, 3);
  Jplane << pv.X.transpose() * tangent_basis(plane.normal), 1.0;
  lin.add(plane_ref(e.plane), Jplane);
}

void evaluate_line_on_plane(const ResidualEdge& e, const State& state, EdgeLinearization& lin,
                            bool with_jacobians) {
  const auto& meas = std::get<LinePlaneMeasurement>(e.measurement);
  const Plane& plane = plane_at(state, e.plane);
  const auto* o = std::get_if<OrthonormalLine>(&landmark_at(state, e.landmark));
  if (o == nullptr) throw Error(ErrorCode::kInvalidInput, "line-on-plane edge needs an orthonormal line");
  const PluckerLine L = orthonormal_to_plucker(*o);
  const Vec3& m = L.moment;
  const Vec3& d = L.direction;
  const double dn2 = d.squaredNorm();
  const double dn = std::sqrt(dn2);
  const Vec3 u = d / dn;
  const Vec3 p0 = d.cross(m) / dn2;
  const Vec3& c = meas.reference;
  const double cu = c.dot(u);
  const Vec3 q = p0 + cu * u;
  const std::array<Vec3, 2> X{q - meas.half_length * u, q + meas.half_length * u};
  ResidualVec r(2);
  r << plane.signed_distance(X[0]), plane.signed_distance(X[1]);
  lin.residual = r;
  if (!with_jacobians) return;

  const Mat3 G = (Mat3::Identity() - u * u.transpose()) / dn;
  const Mat3 dp0_dm = skew(d) / dn2;
  const Mat3 dp0_dd = -skew(m) / dn2 - 2.0 * d.cross(m) * d.transpose() / (dn2 * dn2);
  const Mat3 dq_dd = dp0_dd + u * c.transpose() * G + cu * G;
  const auto [dm_dx, dd_dx] = orthonormal_plucker_jacobian(*o);
  JacobianMat Jline(2, 4);
  JacobianMat Jplane(2, 3);
  const Mat32 B = tangent_basis(plane.normal);
  for (int i = 0; i < 2; ++i) {
    const double sign = i == 0 ? -1.0 : 1.0;
    const Mat3 dX_dd = dq_dd + sign * meas.half_length * G;
    Jline.row(i) = plane.normal.transpose() * (dp0_dm * dm_dx + dX_dd * dd_dx);
    Jplane.row(i) << X[static_cast<std::size_t>(i)].transpose() * B, 1.0;
  }
  lin.add(landmark_ref(e.landmark), Jline);
  lin.add(plane_ref(e.plane), Jplane);
}

void evaluate(const ResidualEdge& e, const CameraIntrinsics& K, const State& state,
              EdgeLinearization& lin, bool with_jacobians) {
  switch (e.kind) {
    case EdgeKind::kPointReproj: evaluate_point_reproj(e, K, state, lin, with_jacobians); return;
    case EdgeKind::kLineReproj: evaluate_line_reproj(e, K, state, lin, with_jacobians); return;
    case EdgeKind::kRelPoseOdometry: evaluate_odometry(e, state, lin, with_jacobians); return;
    case EdgeKind::kPointOnPlane: evaluate_point_on_plane(e, K, state, lin, with_jacobians); return;
    case EdgeKind::kLineOnPlane: evaluate_line_on_plane(e, state, lin, with_jacobians); return;
  }
}

InformationMat isotropic_information(int dim, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidInput, "measurement sigma must be positive");
  return InformationMat::Identity(dim, dim) / (sigma * sigma);
}

}  // namespace

const char* to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::kPointReproj: return "point_reproj";
    case EdgeKind::kLineReproj: return "line_reproj";
    case EdgeKind::kRelPoseOdometry: return "odometry";
    case EdgeKind::kPointOnPlane: return "point_on_plane";
    case EdgeKind::kLineOnPlane: return "line_on_plane";
  }
  return "unknown";
}

int residual_dim(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::kPointReproj: return 2;
    case EdgeKind::kLineReproj: return 2;
    case EdgeKind::kRelPoseOdometry: return 6;
    case EdgeKind::kPointOnPlane: return 1;
    case EdgeKind::kLineOnPlane: return 2;
  }
  return 0;
}

int block_tangent_dim(const BlockRef& ref, const State& state) {
  switch (ref.type) {
    case BlockType::kPose: return 6;
    case BlockType::kPlane: return 3;
    case BlockType::kLandmark: return landmark_tangent_dim(state.landmarks.at(static_cast<std::size_t>(ref.index)));
  }
  return 0;
}

ResidualEdge ResidualEdge::point(int frame, int landmark, const Vec2& pixel, double sigma_px) {
  ResidualEdge e;
  e.kind = EdgeKind::kPointReproj;
  e.frame = frame;
  e.landmark = landmark;
  e.measurement = PointMeasurement{pixel};
  e.information = isotropic_information(2, sigma_px);
  return e;
}

ResidualEdge ResidualEdge::line(int frame, int landmark, const std::array<Vec2, 2>& endpoints,
                                double sigma_px) {
  ResidualEdge e;
  e.kind = EdgeKind::kLineReproj;
  e.frame = frame;
  e.landmark = landmark;
  e.measurement = LineMeasurement{endpoints};
  e.information = isotropic_information(2, sigma_px);
  return e;
}

ResidualEdge ResidualEdge::odometry(int frame_a, int frame_b, const Pose& relative,
                                    double sigma_p, double sigma_theta_rad) {
  if (!(sigma_p > 0.0) || !(sigma_theta_rad > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "odometry sigmas must be positive");
  }
  ResidualEdge e;
  e.kind = EdgeKind::kRelPoseOdometry;
  e.frame = frame_a;
  e.frame_b = frame_b;
  e.measurement = OdometryMeasurement{relative};
  Vec6 diag;
  diag << Vec3::Constant(1.0 / (sigma_p * sigma_p)), Vec3::Constant(1.0 / (sigma_theta_rad * sigma_theta_rad));
  e.information = diag.asDiagonal();
  return e;
}

ResidualEdge ResidualEdge::point_on_plane(int landmark, int plane, double sigma_m) {
  ResidualEdge e;
  e.kind = EdgeKind::kPointOnPlane;
  e.landmark = landmark;
  e.plane = plane;
  e.information = isotropic_information(1, sigma_m);
  return e;
}

ResidualEdge ResidualEdge::line_on_plane(int landmark, int plane, const Vec3& reference,
                                         double half_length, double sigma_m) {
  ResidualEdge e;
  e.kind = EdgeKind::kLineOnPlane;
  e.landmark = landmark;
  e.plane = plane;
  e.measurement = LinePlaneMeasurement{reference, half_length};
  e.information = isotropic_information(2, sigma_m);
  return e;
}

void validate_information(const ResidualEdge& edge) {
  const int dim = residual_dim(edge.kind);
  const auto& I = edge.information;
  if (I.rows() != dim || I.cols() != dim) {
    throw Error(ErrorCode::kInvalidInput, std::string("information matrix has wrong size for ") + to_string(edge.kind));
  }
  if (!I.allFinite() || (I - I.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, I.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::kInvalidInput, "information matrix is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(I)};
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kInvalidInput, "information matrix is not positive definite");
  }
}

RobustEvaluation robust_weight(const RobustLoss& loss, double s) {
  if (!(s >= 0.0)) throw Error(ErrorCode::kInvalidInput, "squared norm must be non-negative");
  switch (loss.kind) {
    case RobustLoss::Kind::kNone:
      return {s, 1.0};
    case RobustLoss::Kind::kCauchy: {
      if (!(loss.scale > 0.0)) throw Error(ErrorCode::kInvalidInput, "Cauchy scale must be positive");
      const double c2 = loss.scale * loss.scale;
      return {c2 * std::log1p(s / c2), 1.0 / (1.0 + s / c2)};
    }
  }
  return {s, 1.0};
}

Vec2 point_residual(const Pose& pose, const Vec3& landmark_world, const CameraIntrinsics& K,
                    const Vec2& measured_pixel) {
  const Vec3 Xc = pose.to_camera(landmark_world);
  if (!(Xc.z() > 0.0)) throw Error(ErrorCode::kBehindCamera, "landmark has non-positive depth");
  return measured_pixel - K.project(Xc);
}

Vec2 line_residual_image(const Vec3& l, const std::array<Vec2, 2>& endpoints) {
  const double n2 = l.x() * l.x() + l.y() * l.y();
  if (n2 < 1e-18) throw Error(ErrorCode::kDegenerateProjection, "projected line has no direction");
  const double n = std::sqrt(n2);
  return {homogeneous(endpoints[0]).dot(l) / n, homogeneous(endpoints[1]).dot(l) / n};
}

Vec2 line_residual(const Pose& pose, const PluckerLine& line_world, const CameraIntrinsics& K,
                   const std::array<Vec2, 2>& endpoints) {
  const PluckerLine Lc = transform_line(pose.inverse(), line_world);
  return line_residual_image(K.line_matrix() * Lc.moment, endpoints);
}

Vec6 odometry_residual(const Pose& pose_a, const Pose& pose_b, const Pose& measured_relative) {
  return pose_boxminus(pose_a.inverse() * pose_b, measured_relative);
}

void EdgeLinearization::add(const BlockRef& ref, const JacobianMat& J) {
  for (int i = 0; i < num_blocks; ++i) {
    if (blocks[static_cast<std::size_t>(i)].block == ref) {
      blocks[static_cast<std::size_t>(i)].jacobian += J;
      return;
    }
  }
  blocks[static_cast<std::size_t>(num_blocks++)] = {ref, J};
}

const JacobianBlock* EdgeLinearization::find(const BlockRef& ref) const {
  for (int i = 0; i < num_blocks; ++i) {
    if (blocks[static_cast<std::size_t>(i)].block == ref) return &blocks[static_cast<std::size_t>(i)];
  }
  return nullptr;
}

std::vector<BlockRef> incident_blocks(const ResidualEdge& edge, const State& state) {
  std::vector<BlockRef> out;
  auto push = [&](const BlockRef& r) {
    if (block_tangent_dim(r, state) == 0) return;
    for (const auto& x : out) {
      if (x == r) return;
    }
    out.push_back(r);
  };
  auto push_landmark = [&](int index) {
    const LandmarkParam& p = landmark_at(state, index);
    if (const auto* ip = std::get_if<InverseDepthPoint>(&p)) push(pose_ref(ip->anchor_frame));
    if (const auto* cp = std::get_if<CoPlanarPoint>(&p)) {
      push(pose_ref(cp->anchor_frame));
      push(plane_ref(cp->plane_id));
    }
    if (const auto* cl = std::get_if<CoPlanarLine>(&p)) {
      push(pose_ref(cl->anchor_frame));
      push(plane_ref(cl->plane_id));
    }
    push(landmark_ref(index));
  };
  switch (edge.kind) {
    case EdgeKind::kPointReproj:
    case EdgeKind::kLineReproj:
      push(pose_ref(edge.frame));
      push_landmark(edge.landmark);
      break;
    case EdgeKind::kRelPoseOdometry:
      push(pose_ref(edge.frame));
      push(pose_ref(edge.frame_b));
      break;
    case EdgeKind::kPointOnPlane:
    case EdgeKind::kLineOnPlane:
      push_landmark(edge.landmark);
      push(plane_ref(edge.plane));
      break;
  }
  return out;
}

ResidualVec edge_residual(const ResidualEdge& edge, const CameraIntrinsics& K, const State& state) {
  EdgeLinearization lin;
  evaluate(edge, K, state, lin, false);
  return lin.residual;
}

EdgeLinearization edge_jacobians(const ResidualEdge& edge, const CameraIntrinsics& K,
                                 const State& state) {
  EdgeLinearization lin;
  evaluate(edge, K, state, lin, true);
  return lin;
}

void apply_block_increment(State& state, const BlockRef& ref,
                           const Eigen::Ref<const Eigen::VectorXd>& delta) {
  const auto idx = static_cast<std::size_t>(ref.index);
  switch (ref.type) {
    case BlockType::kPose:
      state.poses.at(idx) = pose_boxplus(state.poses.at(idx), delta.head<6>());
      return;
    case BlockType::kPlane:
      state.planes.at(idx) = plane_boxplus(state.planes.at(idx), delta.head<3>());
      return;
    case BlockType::kLandmark: {
      if (!delta.allFinite()) throw Error(ErrorCode::kInvalidInput, "landmark increment is not finite");
      LandmarkParam& p = state.landmarks.at(idx);
      if (auto* e = std::get_if<EuclideanPoint>(&p)) {
        e->position += delta.head<3>();
      } else if (auto* ip = std::get_if<InverseDepthPoint>(&p)) {
        ip->inverse_depth += delta(0);
      } else if (auto* o = std::get_if<OrthonormalLine>(&p)) {
        *o = line_boxplus(*o, delta.head<4>());
      }
      return;
    }
  }
}

}  // namespace cpba

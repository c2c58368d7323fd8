#pragma once

#include <array>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "cpba/geometry.hpp"
#include "cpba/state.hpp"

namespace cpba {

using ResidualVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 6, 1>;
using JacobianMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 6>;
using InformationMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 6>;

enum class EdgeKind {
  kPointReproj,      // 2 px
  kLineReproj,       // 2 px, endpoint-to-line distances
  kRelPoseOdometry,  // 6, (translation, rotation)
  kPointOnPlane,     // 1 m
  kLineOnPlane,      // 2 m
};

const char* to_string(EdgeKind kind);
int residual_dim(EdgeKind kind);

struct PointMeasurement {
  Vec2 pixel = Vec2::Zero();
};
struct LineMeasurement {
  std::array<Vec2, 2> endpoints{Vec2::Zero(), Vec2::Zero()};
};
struct OdometryMeasurement {
  Pose relative;  // T_a^-1 T_b
};
/// The line-to-plane residual measures the signed plane distance of two points
/// on the line, half_length either side of the foot of `reference`.
struct LinePlaneMeasurement {
  Vec3 reference = Vec3::Zero();
  double half_length = 0.5;
};

using Measurement = std::variant<PointMeasurement, LineMeasurement, OdometryMeasurement,
                                 LinePlaneMeasurement, std::monostate>;

struct ResidualEdge {
  EdgeKind kind = EdgeKind::kPointReproj;
  int frame = -1;    // observing pose, or pose a for odometry
  int frame_b = -1;  // pose b for odometry
  int landmark = -1;
  int plane = -1;    // plane block of on-plane edges
  Measurement measurement = std::monostate{};
  InformationMat information;

  static ResidualEdge point(int frame, int landmark, const Vec2& pixel, double sigma_px = 1.0);
  static ResidualEdge line(int frame, int landmark, const std::array<Vec2, 2>& endpoints,
                           double sigma_px = 1.0);
  static ResidualEdge odometry(int frame_a, int frame_b, const Pose& relative,
                               double sigma_p, double sigma_theta_rad);
  static ResidualEdge point_on_plane(int landmark, int plane, double sigma_m);
  static ResidualEdge line_on_plane(int landmark, int plane, const Vec3& reference,
                                    double half_length, double sigma_m);
};

/// Throws kInvalidInput unless the information matrix is symmetric (1e-12)
/// and positive definite with the edge's residual dimension.
void validate_information(const ResidualEdge& edge);

struct RobustLoss {
  enum class Kind { kNone, kCauchy };
  Kind kind = Kind::kNone;
  double scale = 1.0;

  static RobustLoss none() { return {}; }
  static RobustLoss cauchy(double c = 1.0) { return {Kind::kCauchy, c}; }
};

struct RobustEvaluation {
  double cost = 0.0;
  double weight = 1.0;
};

/// cost = c^2 log(1 + s / c^2), weight = rho'(s) for Cauchy; (s, 1) for none.
RobustEvaluation robust_weight(const RobustLoss& loss, double squared_whitened_norm);

// --- raw residuals ---------------------------------------------------------

/// measured - projection. Throws kBehindCamera for non-positive depth.
Vec2 point_residual(const Pose& pose, const Vec3& landmark_world, const CameraIntrinsics& K,
                    const Vec2& measured_pixel);

/// Signed distances of two homogeneous pixel points from an image line.
Vec2 line_residual_image(const Vec3& image_line, const std::array<Vec2, 2>& endpoints);

/// Projects a world line into the image and measures the endpoint distances.
Vec2 line_residual(const Pose& pose, const PluckerLine& line_world, const CameraIntrinsics& K,
                   const std::array<Vec2, 2>& endpoints);

/// boxminus(T_a^-1 T_b, measured) in (translation, rotation) order.
Vec6 odometry_residual(const Pose& pose_a, const Pose& pose_b, const Pose& measured_relative);

// --- edge linearisation ----------------------------------------------------

struct JacobianBlock {
  BlockRef block;
  JacobianMat jacobian;
};

struct EdgeLinearization {
  ResidualVec residual;
  std::array<JacobianBlock, 4> blocks;
  int num_blocks = 0;

  /// Adds a Jacobian block, summing into an existing entry for the same block.
  void add(const BlockRef& ref, const JacobianMat& J);
  const JacobianBlock* find(const BlockRef& ref) const;
};

/// Variable blocks whose value affects the edge, including the plane block of
/// co-planar landmarks and the anchor pose of anchored landmarks. Blocks with
/// zero tangent dimension are omitted.
std::vector<BlockRef> incident_blocks(const ResidualEdge& edge, const State& state);

ResidualVec edge_residual(const ResidualEdge& edge, const CameraIntrinsics& K, const State& state);

/// Residual plus analytic Jacobians (in tangent coordinates) for every
/// incident block.
EdgeLinearization edge_jacobians(const ResidualEdge& edge, const CameraIntrinsics& K,
                                 const State& state);

/// Applies a tangent increment to one block of the state.
void apply_block_increment(State& state, const BlockRef& ref, const Eigen::Ref<const Eigen::VectorXd>& delta);

}  // namespace cpba

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpba/geometry.hpp"
#include "cpba/ransac.hpp"
#include "cpba/solver.hpp"

namespace cpba {

/// Sinusoidal path: x advances linearly over `length`, z = amplitude *
/// sin(2 pi x / period). The camera looks horizontally at yaw angle
/// yaw_start + s * yaw_sweep, s in [0, 1] along the path (yaw 0 = +x).
struct TrajectoryConfig {
  double amplitude = 1.0;  // m
  double period = 10.0;    // m
  double length = 20.0;    // m
  Vec3 start = Vec3::Zero();
  double yaw_start_deg = 90.0;
  double yaw_sweep_deg = 0.0;
};

/// Rectangle origin + a u_axis + b v_axis, |a| <= u_half, |b| <= v_half.
/// The generating plane has normal u_axis x v_axis.
struct WallConfig {
  Vec3 origin = Vec3::Zero();
  Vec3 u_axis = Vec3::UnitX();
  Vec3 v_axis = Vec3::UnitZ();
  double u_half = 1.0;
  double v_half = 1.0;

  Plane plane() const;
};

struct CameraConfig {
  int width = 640;
  int height = 480;
  CameraIntrinsics intrinsics{460.0, 460.0, 320.0, 240.0};
};

struct SceneConfig {
  std::string name = "custom";
  int n_points = 50;
  int n_lines = 20;
  int n_poses = 50;
  TrajectoryConfig trajectory;
  std::vector<WallConfig> walls;
  double line_length_min = 0.5;  // m
  double line_length_max = 1.5;
  // In-plane line directions are drawn at an angle in
  // [line_min_angle_deg, 180 - line_min_angle_deg] from the wall's u axis.
  double line_min_angle_deg = 30.0;
  double min_depth = 0.2;        // m, visibility
  double outlier_fraction = 0.0;
  double outlier_offset_min = 0.5;  // m off the wall
  double outlier_offset_max = 1.5;
  double pixel_noise_sigma = 1.0;    // px
  double odom_sigma_theta_deg = 1.0;
  double odom_sigma_p = 0.1;         // m
  CameraConfig camera;
  std::uint64_t rng_seed = 1;
  int placement_retries = 100;

  void validate() const;
};

enum class LossKind { kNone, kCauchy };

/// Solver and residual weighting used by every variant.
struct SolverConfig {
  int max_iterations = 10;
  SolverMode mode = SolverMode::kGaussNewton;
  LossKind loss = LossKind::kNone;
  double loss_scale = 1.0;   // whitened units
  double plane_sigma = 0.001; // m, point/line-to-plane residuals
};

struct BenchConfig {
  SceneConfig scene;
  RansacConfig ransac;
  SolverConfig solver;
  int n_runs = 30;
};

BenchConfig preset_sequence_a();
BenchConfig preset_sequence_b();

/// Preset by name ("sequence_a", "sequence_b"); throws kConfigParse otherwise.
BenchConfig preset(const std::string& name);

/// Parses a YAML config. Missing keys keep the defaults of the preset named
/// by the optional top-level `preset` key (sequence_b when absent).
/// Throws kConfigParse on syntax errors, unknown keys or invalid values.
BenchConfig load_config(const std::string& path);
BenchConfig parse_config(const std::string& yaml_text);

std::string to_yaml(const BenchConfig& cfg);

/// FNV-1a of the canonical YAML form, hex encoded.
std::string config_hash(const BenchConfig& cfg);

}  // namespace cpba

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpba/problem.hpp"
#include "cpba/ransac.hpp"
#include "cpba/scene_config.hpp"
#include "cpba/solver.hpp"

namespace cpba {

struct GroundTruth {
  std::vector<Pose> poses;
  std::vector<Vec3> points;
  std::vector<std::array<Vec3, 2>> lines;  // segment endpoints
  std::vector<Plane> planes;               // one per wall
  // Candidate region (wall index) of every landmark, and the plane it truly
  // lies on: -1 for injected outliers.
  std::vector<int> point_region;
  std::vector<int> point_plane;
  std::vector<int> line_region;
  std::vector<int> line_plane;
};

struct PointPixel {
  int frame = 0;
  int landmark = 0;
  Vec2 pixel = Vec2::Zero();
};

struct LinePixels {
  int frame = 0;
  int landmark = 0;
  std::array<Vec2, 2> endpoints{Vec2::Zero(), Vec2::Zero()};
};

struct MeasurementSet {
  std::vector<PointPixel> points;  // ordered by landmark, then frame
  std::vector<LinePixels> lines;
  std::vector<Pose> odometry;      // odometry[k] measures T_k^-1 T_{k+1}
};

struct Scene {
  GroundTruth gt;
  MeasurementSet meas;
};

/// Deterministic given cfg.rng_seed. Landmarks seen by fewer than two poses
/// are re-placed up to placement_retries times.
Scene generate_scene(const SceneConfig& cfg);

/// Ground-truth camera poses of the configured trajectory.
std::vector<Pose> trajectory_poses(const SceneConfig& cfg);

/// Whether a world point projects inside the image in front of the camera.
bool is_visible(const SceneConfig& cfg, const Pose& T_wc, const Vec3& X);

enum class CoplanarMode { kNone, kResidual, kReparam };

struct VariantSpec {
  std::string id;
  bool uses_lines = false;
  CoplanarMode mode = CoplanarMode::kNone;

  /// Accepts P-wo, P-r, P-w, PL-wo, PL-r, PL-w; throws kInvalidInput otherwise.
  static VariantSpec parse(const std::string& id);
};

/// The five compared formulations.
std::vector<VariantSpec> default_variants();
/// The five plus PL-wo.
std::vector<VariantSpec> accounting_variants();

/// Front-end output shared by every variant of one run: odometry-integrated
/// poses, triangulated landmarks and per-region RANSAC associations.
struct FrontEnd {
  std::vector<Pose> initial_poses;
  std::vector<Vec3> map_points;
  std::vector<std::optional<PluckerLine>> map_lines;  // empty when not triangulable
  std::vector<std::array<Vec3, 2>> map_line_segments;
  std::vector<int> point_anchor;  // first observing frame
  std::vector<int> line_anchor;
  std::vector<PlanarCandidateSet> regions_points;  // candidates without lines
  std::vector<PlanarCandidateSet> regions_all;     // with lines
  std::vector<std::optional<PlaneAssociation>> assoc_points;
  std::vector<std::optional<PlaneAssociation>> assoc_all;
};

FrontEnd run_front_end(const Scene& scene, const SceneConfig& cfg, const RansacConfig& ransac);

struct BuiltProblem {
  Problem problem;
  State initial;
  int degraded_regions = 0;     // planar regions without an accepted plane
  int demoted_landmarks = 0;    // inliers kept independent for conditioning
};

BuiltProblem build_problem(const Scene& scene, const FrontEnd& fe, const VariantSpec& variant,
                           const BenchConfig& cfg);
BuiltProblem build_problem(const Scene& scene, const VariantSpec& variant, const BenchConfig& cfg);

enum class Alignment { kNone, kRigid };

/// RMS translational error, optionally after the best rigid alignment of
/// estimated onto ground-truth positions.
double ate_rmse(const std::vector<Pose>& estimated, const std::vector<Pose>& ground_truth,
                Alignment align = Alignment::kRigid);

struct RunReport {
  std::string variant;
  std::uint64_t seed = 0;
  double rmse_m = 0.0;
  double opt_time_s = 0.0;
  int items = 0;
  int parameters = 0;
  int iterations = 0;
  bool converged = false;
  double final_cost = 0.0;
  int degraded_regions = 0;
  bool ok = true;
  std::string error;
};

struct VariantSummary {
  std::string variant;
  int runs_ok = 0;
  int runs_failed = 0;
  double median_rmse_m = 0.0;
  double median_time_s = 0.0;
  int items = 0;
  int parameters = 0;
  double median_iterations = 0.0;
};

struct MonteCarloResult {
  std::vector<RunReport> runs;  // run-major, variants in the requested order
  std::vector<VariantSummary> summary;
};

/// Solves one variant of one scene and scores it.
RunReport run_variant(const Scene& scene, const FrontEnd& fe, const VariantSpec& variant,
                      const BenchConfig& cfg, std::uint64_t seed);

/// Run r uses scene seed base_seed + r; all variants of a run share the scene.
MonteCarloResult run_monte_carlo(const BenchConfig& cfg, const std::vector<VariantSpec>& variants,
                                 int n_runs, std::uint64_t base_seed, int jobs = 1);

double median(std::vector<double> values);
std::vector<VariantSummary> summarize(const std::vector<RunReport>& runs,
                                      const std::vector<VariantSpec>& variants);

}  // namespace cpba

#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include <gtest/gtest.h>

#include "cpba/simulator.hpp"

using namespace cpba;

namespace {

SceneConfig seq_b(std::uint64_t seed) {
  SceneConfig c = preset("sequence_b").scene;
  c.rng_seed = seed;
  return c;
}

BenchConfig zero_noise_b() {
  BenchConfig c = preset("sequence_b");
  c.scene.pixel_noise_sigma = 0.0;
  c.scene.odom_sigma_theta_deg = 0.0;
  c.scene.odom_sigma_p = 0.0;
  return c;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_pose(const Pose& a, const Pose& b) {
  return a.translation == b.translation && a.rotation.coeffs() == b.rotation.coeffs();
}

}  // namespace

TEST(Trajectory, SinusoidAlongX) {
  const SceneConfig c = seq_b(1);
  const auto poses = trajectory_poses(c);
  ASSERT_EQ(static_cast<int>(poses.size()), c.n_poses);
  const auto& t = c.trajectory;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const double u = t.length * static_cast<double>(k) / (c.n_poses - 1);
    EXPECT_NEAR(poses[k].translation.x(), t.start.x() + u, 1e-12);
    EXPECT_NEAR(poses[k].translation.z(), t.start.z() + t.amplitude * std::sin(2 * M_PI * u / t.period), 1e-12);
    EXPECT_NEAR(poses[k].rotation.norm(), 1.0, 1e-12);
  }
}

TEST(Generate, DeterministicBytes) {
  const Scene a = generate_scene(seq_b(11));
  const Scene b = generate_scene(seq_b(11));
  ASSERT_EQ(a.meas.points.size(), b.meas.points.size());
  ASSERT_EQ(a.meas.lines.size(), b.meas.lines.size());
  for (std::size_t i = 0; i < a.meas.points.size(); ++i) {
    EXPECT_EQ(a.meas.points[i].frame, b.meas.points[i].frame);
    EXPECT_TRUE(same_bits(a.meas.points[i].pixel.x(), b.meas.points[i].pixel.x()));
    EXPECT_TRUE(same_bits(a.meas.points[i].pixel.y(), b.meas.points[i].pixel.y()));
  }
  for (std::size_t i = 0; i < a.gt.points.size(); ++i) EXPECT_EQ(a.gt.points[i], b.gt.points[i]);
  for (std::size_t k = 0; k < a.meas.odometry.size(); ++k) EXPECT_TRUE(same_pose(a.meas.odometry[k], b.meas.odometry[k]));
  const Scene c = generate_scene(seq_b(12));
  EXPECT_NE(a.gt.points[0], c.gt.points[0]);
}

TEST(Generate, ZeroNoiseGivesExactProjections) {
  SceneConfig c = seq_b(3);
  c.pixel_noise_sigma = 0.0;
  c.odom_sigma_p = 0.0;
  c.odom_sigma_theta_deg = 0.0;
  const Scene s = generate_scene(c);
  const auto& K = c.camera.intrinsics;
  for (const auto& m : s.meas.points) {
    const Vec2 exact = K.project(s.gt.poses[static_cast<std::size_t>(m.frame)].to_camera(s.gt.points[static_cast<std::size_t>(m.landmark)]));
    EXPECT_EQ(m.pixel, exact);
  }
  for (const auto& m : s.meas.lines) {
    for (int e = 0; e < 2; ++e) {
      const Vec3 X = s.gt.lines[static_cast<std::size_t>(m.landmark)][static_cast<std::size_t>(e)];
      EXPECT_EQ(m.endpoints[static_cast<std::size_t>(e)], K.project(s.gt.poses[static_cast<std::size_t>(m.frame)].to_camera(X)));
    }
  }
  for (std::size_t k = 0; k < s.meas.odometry.size(); ++k) {
    const Pose rel = s.gt.poses[k].inverse() * s.gt.poses[k + 1];
    EXPECT_LT((s.meas.odometry[k].translation - rel.translation).norm(), 1e-15);
    EXPECT_LT(s.meas.odometry[k].rotation.angularDistance(rel.rotation), 1e-12);
  }
}

TEST(Generate, PixelNoiseCalibrated) {
  // Same seed with and without noise places identical geometry; the
  // difference of the measurements is the injected noise.
  std::vector<double> samples;
  for (std::uint64_t seed = 0; samples.size() < 100000; ++seed) {
    SceneConfig noisy = seq_b(500 + seed);
    noisy.pixel_noise_sigma = 2.0;
    SceneConfig clean = noisy;
    clean.pixel_noise_sigma = 0.0;
    const Scene a = generate_scene(noisy), b = generate_scene(clean);
    ASSERT_EQ(a.meas.points.size(), b.meas.points.size());
    for (std::size_t i = 0; i < a.meas.points.size(); ++i) {
      const Vec2 d = a.meas.points[i].pixel - b.meas.points[i].pixel;
      samples.push_back(d.x());
      samples.push_back(d.y());
    }
    for (std::size_t i = 0; i < a.meas.lines.size(); ++i) {
      for (int e = 0; e < 2; ++e) {
        const Vec2 d = a.meas.lines[i].endpoints[static_cast<std::size_t>(e)] - b.meas.lines[i].endpoints[static_cast<std::size_t>(e)];
        samples.push_back(d.x());
        samples.push_back(d.y());
      }
    }
  }
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double var = 0.0;
  for (double x : samples) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / (n - 1));
  EXPECT_NEAR(sd, 2.0, 0.02 * 2.0);
  EXPECT_NEAR(mean, 0.0, 0.05);
}

TEST(Generate, OdometryNoiseCalibrated) {
  SceneConfig c = seq_b(0);
  c.n_poses = 2000;
  c.trajectory.length = 400.0;
  c.n_points = 1;
  c.n_lines = 0;
  c.walls[0].u_half = 250.0;
  c.walls[0].origin.x() = 200.0;
  c.odom_sigma_p = 0.1;
  c.odom_sigma_theta_deg = 1.0;
  const Scene s = generate_scene(c);
  double sp = 0.0, st = 0.0;
  for (std::size_t k = 0; k + 1 < s.gt.poses.size(); ++k) {
    const Pose rel = s.gt.poses[k].inverse() * s.gt.poses[k + 1];
    sp += (s.meas.odometry[k].translation - rel.translation).squaredNorm();
    const double a = s.meas.odometry[k].rotation.angularDistance(rel.rotation);
    st += a * a;
  }
  const double m = static_cast<double>(s.meas.odometry.size());
  EXPECT_NEAR(std::sqrt(sp / (3 * m)), 0.1, 0.005);
  EXPECT_NEAR(std::sqrt(st / (3 * m)) * 180.0 / M_PI, 1.0, 0.05);
}

TEST(Generate, VisibilityAndCoverage) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SceneConfig c = seq_b(seed);
    const Scene s = generate_scene(c);
    ASSERT_EQ(static_cast<int>(s.gt.points.size()), c.n_points);
    ASSERT_EQ(static_cast<int>(s.gt.lines.size()), c.n_lines);
    std::map<int, std::set<int>> point_frames, line_frames;
    for (const auto& m : s.meas.points) {
      EXPECT_TRUE(is_visible(c, s.gt.poses[static_cast<std::size_t>(m.frame)], s.gt.points[static_cast<std::size_t>(m.landmark)]));
      point_frames[m.landmark].insert(m.frame);
    }
    for (const auto& m : s.meas.lines) line_frames[m.landmark].insert(m.frame);
    for (int i = 0; i < c.n_points; ++i) EXPECT_GE(point_frames[i].size(), 2u) << "point " << i;
    for (int j = 0; j < c.n_lines; ++j) EXPECT_GE(line_frames[j].size(), 2u) << "line " << j;
    // Points not visible in a frame produce no observation there.
    for (int i = 0; i < c.n_points; ++i) {
      for (int k = 0; k < c.n_poses; ++k) {
        EXPECT_EQ(is_visible(c, s.gt.poses[static_cast<std::size_t>(k)], s.gt.points[static_cast<std::size_t>(i)]),
                  point_frames[i].count(k) == 1);
      }
    }
  }
}

TEST(Generate, MembersLieOnTheirPlane) {
  BenchConfig cfg = preset("sequence_a");
  cfg.scene.rng_seed = 4;
  const Scene s = generate_scene(cfg.scene);
  ASSERT_EQ(s.gt.planes.size(), 4u);
  for (std::size_t i = 0; i < s.gt.points.size(); ++i) {
    const int p = s.gt.point_plane[i];
    ASSERT_GE(p, 0);
    EXPECT_LT(std::abs(s.gt.planes[static_cast<std::size_t>(p)].signed_distance(s.gt.points[i])), 1e-12);
  }
  for (std::size_t j = 0; j < s.gt.lines.size(); ++j) {
    const Plane& pl = s.gt.planes[static_cast<std::size_t>(s.gt.line_plane[j])];
    EXPECT_LT(std::abs(pl.signed_distance(s.gt.lines[j][0])), 1e-12);
    EXPECT_LT(std::abs(pl.signed_distance(s.gt.lines[j][1])), 1e-12);
  }
}

TEST(Generate, OutliersLeaveTheirPlane) {
  SceneConfig c = seq_b(9);
  c.outlier_fraction = 0.2;
  const Scene s = generate_scene(c);
  int outliers = 0;
  for (std::size_t i = 0; i < s.gt.points.size(); ++i) {
    const double d = std::abs(s.gt.planes[0].signed_distance(s.gt.points[i]));
    if (s.gt.point_plane[i] < 0) {
      ++outliers;
      EXPECT_GE(d, c.outlier_offset_min - 1e-9);
    } else {
      EXPECT_LT(d, 1e-12);
    }
  }
  for (std::size_t j = 0; j < s.gt.lines.size(); ++j) outliers += s.gt.line_plane[j] < 0;
  EXPECT_EQ(outliers, 14);  // round(0.2 * 70)
}

TEST(Generate, InfeasibleSceneThrows) {
  SceneConfig c = seq_b(1);
  c.walls[0].origin.y() = -50.0;  // behind every camera
  c.placement_retries = 20;
  try {
    generate_scene(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSceneGeneration);
  }
}

TEST(Variants, Parse) {
  const VariantSpec p = VariantSpec::parse("P-wo");
  EXPECT_FALSE(p.uses_lines);
  EXPECT_EQ(p.mode, CoplanarMode::kNone);
  EXPECT_EQ(VariantSpec::parse("PL-r").mode, CoplanarMode::kResidual);
  EXPECT_TRUE(VariantSpec::parse("PL-w").uses_lines);
  EXPECT_EQ(VariantSpec::parse("P-w").mode, CoplanarMode::kReparam);
  EXPECT_THROW(VariantSpec::parse("PL-x"), Error);
  EXPECT_THROW(VariantSpec::parse("p-w"), Error);
  std::vector<std::string> ids;
  for (const auto& v : default_variants()) ids.push_back(v.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"P-wo", "P-r", "P-w", "PL-r", "PL-w"}));
  EXPECT_EQ(accounting_variants().size(), 6u);
}

TEST(BuildProblem, AccountingSequenceB) {
  const std::map<std::string, ItemCount> expected{{"P-wo", {100, 350}}, {"P-r", {101, 353}},  {"P-w", {51, 303}},
                                                  {"PL-wo", {120, 430}}, {"PL-r", {121, 433}}, {"PL-w", {51, 303}}};
  const BenchConfig cfg = preset("sequence_b");
  for (std::uint64_t seed : {1u, 17u}) {
    BenchConfig c = cfg;
    c.scene.rng_seed = seed;
    const Scene s = generate_scene(c.scene);
    const FrontEnd fe = run_front_end(s, c.scene, c.ransac);
    for (const auto& v : accounting_variants()) {
      const BuiltProblem b = build_problem(s, fe, v, c);
      EXPECT_EQ(count_items_parameters(b.problem, b.initial), expected.at(v.id)) << v.id << " seed " << seed;
      EXPECT_EQ(b.degraded_regions, 0);
      if (v.mode == CoplanarMode::kNone) EXPECT_TRUE(b.initial.planes.empty()) << v.id;
      else EXPECT_EQ(b.initial.planes.size(), 1u) << v.id;
    }
  }
}

TEST(BuildProblem, VariantsShareMeasurements) {
  BenchConfig cfg = preset("sequence_b");
  cfg.scene.rng_seed = 5;
  const Scene s = generate_scene(cfg.scene);
  const FrontEnd fe = run_front_end(s, cfg.scene, cfg.ransac);
  std::set<std::tuple<int, double, double>> point_pixels;
  for (const auto& m : s.meas.points) point_pixels.emplace(m.frame, m.pixel.x(), m.pixel.y());
  std::set<std::tuple<int, double, double, double, double>> line_pixels;
  for (const auto& m : s.meas.lines) {
    line_pixels.emplace(m.frame, m.endpoints[0].x(), m.endpoints[0].y(), m.endpoints[1].x(), m.endpoints[1].y());
  }
  for (const auto& v : accounting_variants()) {
    const BuiltProblem b = build_problem(s, fe, v, cfg);
    int odom = 0;
    for (const auto& e : b.problem.edges) {
      if (e.kind == EdgeKind::kPointReproj) {
        const Vec2 px = std::get<PointMeasurement>(e.measurement).pixel;
        EXPECT_TRUE(point_pixels.count({e.frame, px.x(), px.y()})) << v.id;
      } else if (e.kind == EdgeKind::kLineReproj) {
        EXPECT_TRUE(v.uses_lines);
        const auto& ep = std::get<LineMeasurement>(e.measurement).endpoints;
        EXPECT_TRUE(line_pixels.count({e.frame, ep[0].x(), ep[0].y(), ep[1].x(), ep[1].y()})) << v.id;
      } else if (e.kind == EdgeKind::kRelPoseOdometry) {
        const Pose& m = std::get<OdometryMeasurement>(e.measurement).relative;
        EXPECT_TRUE(same_pose(m, s.meas.odometry[static_cast<std::size_t>(e.frame)])) << v.id;
        EXPECT_EQ(e.frame_b, e.frame + 1);
        ++odom;
      } else {
        EXPECT_EQ(v.mode, CoplanarMode::kResidual) << v.id;
      }
    }
    EXPECT_EQ(odom, cfg.scene.n_poses - 1) << v.id;
    for (std::size_t k = 0; k < b.initial.poses.size(); ++k) EXPECT_TRUE(same_pose(b.initial.poses[k], fe.initial_poses[k]));
  }
}

TEST(BuildProblem, InitialPosesIntegrateOdometry) {
  const Scene s = generate_scene(seq_b(6));
  const BenchConfig cfg = preset("sequence_b");
  const FrontEnd fe = run_front_end(s, seq_b(6), cfg.ransac);
  Pose T = s.gt.poses[0];
  for (std::size_t k = 0; k < fe.initial_poses.size(); ++k) {
    EXPECT_LT((fe.initial_poses[k].translation - T.translation).norm(), 1e-9);
    if (k < s.meas.odometry.size()) T = T * s.meas.odometry[k];
  }
}

TEST(Ate, Examples) {
  std::vector<Pose> gt;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int i = 0; i < 20; ++i) gt.push_back(Pose{quat_exp(Vec3(0.1 * g(rng), 0.1 * g(rng), 0.1 * g(rng))), Vec3(g(rng), g(rng), g(rng))});
  EXPECT_EQ(ate_rmse(gt, gt, Alignment::kNone), 0.0);
  EXPECT_LT(ate_rmse(gt, gt, Alignment::kRigid), 1e-12);
  std::vector<Pose> shifted = gt;
  for (auto& p : shifted) p.translation += Vec3(1, 0, 0);
  EXPECT_NEAR(ate_rmse(shifted, gt, Alignment::kNone), 1.0, 1e-12);
  EXPECT_LT(ate_rmse(shifted, gt, Alignment::kRigid), 1e-12);
  // Rigidly moved trajectory aligns back exactly.
  const Pose M{quat_exp(Vec3(0.3, -0.2, 0.5)), Vec3(2, -1, 4)};
  std::vector<Pose> moved;
  for (const auto& p : gt) moved.push_back(M * p);
  EXPECT_GT(ate_rmse(moved, gt, Alignment::kNone), 1.0);
  EXPECT_LT(ate_rmse(moved, gt, Alignment::kRigid), 1e-12);
  // Scale is not removed by the rigid alignment.
  std::vector<Pose> scaled = gt;
  for (auto& p : scaled) p.translation *= 2.0;
  EXPECT_GT(ate_rmse(scaled, gt, Alignment::kRigid), 0.1);
  EXPECT_THROW(ate_rmse(std::vector<Pose>(gt.begin(), gt.end() - 1), gt), Error);
}

TEST(Ate, RigidAlignmentIsOptimal) {
  // Independent check: the rigid alignment must not be beaten by any small
  // perturbation of itself.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<Pose> gt, est;
  for (int i = 0; i < 30; ++i) {
    gt.push_back(Pose{Eigen::Quaterniond::Identity(), Vec3(i * 0.5, std::sin(i * 0.3), 0.2 * g(rng))});
    est.push_back(Pose{Eigen::Quaterniond::Identity(), gt.back().translation + 0.1 * Vec3(g(rng), g(rng), g(rng))});
  }
  const double best = ate_rmse(est, gt, Alignment::kRigid);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose M{quat_exp(0.01 * Vec3(g(rng), g(rng), g(rng))), 0.01 * Vec3(g(rng), g(rng), g(rng))};
    std::vector<Pose> moved;
    for (const auto& p : est) moved.push_back(M * p);
    EXPECT_GE(ate_rmse(moved, gt, Alignment::kNone) + 1e-12, best);
  }
}

TEST(MonteCarlo, MedianIsOrderFree) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
  std::vector<double> v{5, 9, 1, 7, 3, 8};
  const double m = median(v);
  std::mt19937 rng(2);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(v.begin(), v.end(), rng);
    EXPECT_EQ(median(v), m);
  }
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(MonteCarlo, SingleRunSummaryEqualsRun) {
  const BenchConfig cfg = preset("sequence_b");
  const auto variants = default_variants();
  const MonteCarloResult r = run_monte_carlo(cfg, variants, 1, 42);
  ASSERT_EQ(r.runs.size(), variants.size());
  ASSERT_EQ(r.summary.size(), variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    EXPECT_TRUE(r.runs[v].ok) << r.runs[v].error;
    EXPECT_EQ(r.runs[v].seed, 42u);
    EXPECT_EQ(r.summary[v].variant, variants[v].id);
    EXPECT_EQ(r.summary[v].runs_ok, 1);
    EXPECT_EQ(r.summary[v].median_rmse_m, r.runs[v].rmse_m);
    EXPECT_EQ(r.summary[v].median_time_s, r.runs[v].opt_time_s);
    EXPECT_EQ(r.summary[v].items, r.runs[v].items);
    EXPECT_TRUE(std::isfinite(r.runs[v].rmse_m));
    EXPECT_GT(r.runs[v].opt_time_s, 0.0);
  }
}

TEST(MonteCarlo, SeedsAndPairingAndJobs) {
  const BenchConfig cfg = preset("sequence_b");
  const auto variants = default_variants();
  const MonteCarloResult serial = run_monte_carlo(cfg, variants, 3, 100, 1);
  const MonteCarloResult parallel = run_monte_carlo(cfg, variants, 3, 100, 3);
  ASSERT_EQ(serial.runs.size(), 15u);
  ASSERT_EQ(parallel.runs.size(), 15u);
  for (std::size_t i = 0; i < serial.runs.size(); ++i) {
    EXPECT_EQ(serial.runs[i].seed, 100 + i / variants.size());
    EXPECT_EQ(serial.runs[i].variant, variants[i % variants.size()].id);
    EXPECT_EQ(serial.runs[i].rmse_m, parallel.runs[i].rmse_m);
    EXPECT_EQ(serial.runs[i].final_cost, parallel.runs[i].final_cost);
  }
  EXPECT_THROW(run_monte_carlo(cfg, variants, 0, 1), Error);
  EXPECT_THROW(run_monte_carlo(cfg, {}, 1, 1), Error);
}

TEST(MonteCarlo, FailedRunsAreCountedAndExcluded) {
  std::vector<RunReport> runs;
  for (int i = 0; i < 4; ++i) {
    RunReport r;
    r.variant = "P-w";
    r.rmse_m = i == 3 ? 1e9 : 0.1 * (i + 1);
    r.opt_time_s = 0.01;
    r.ok = i != 3;
    runs.push_back(r);
  }
  const auto s = summarize(runs, {VariantSpec::parse("P-w")});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].runs_ok, 3);
  EXPECT_EQ(s[0].runs_failed, 1);
  EXPECT_DOUBLE_EQ(s[0].median_rmse_m, 0.2);
}

TEST(MonteCarlo, ZeroNoiseRecoversGroundTruth) {
  const BenchConfig cfg = zero_noise_b();
  const MonteCarloResult r = run_monte_carlo(cfg, accounting_variants(), 2, 7);
  for (const auto& run : r.runs) {
    ASSERT_TRUE(run.ok) << run.variant << ": " << run.error;
    EXPECT_LT(run.rmse_m, 1e-6) << run.variant;
    EXPECT_LT(run.final_cost, 1e-10) << run.variant;
    EXPECT_LE(run.iterations, 10);
  }
}

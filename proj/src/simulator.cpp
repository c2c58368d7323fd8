#include "cpba/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include <Eigen/Geometry>

#include "cpba/error.hpp"
#include "cpba/parametrizations.hpp"

namespace cpba {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
// Co-planar landmarks whose anchor ray or back-projection plane meets the
// plane at less than this angle keep their own parameters.
constexpr double kMinIncidence = 10.0 * kDeg;
// Placement requires this much viewing-angle spread for triangulation.
constexpr double kMinParallax = 3.0 * kDeg;

Pose look_pose(const Vec3& centre, double yaw) {
  const Vec3 forward(std::cos(yaw), std::sin(yaw), 0.0);
  const Vec3 right = forward.cross(Vec3::UnitZ());
  const Vec3 down = forward.cross(right);
  Mat3 R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = forward;
  return Pose::from(R, centre);
}

int count_visible(const SceneConfig& cfg, const std::vector<Pose>& poses, const Vec3& X) {
  int n = 0;
  for (const auto& T : poses) n += is_visible(cfg, T, X) ? 1 : 0;
  return n;
}

int count_visible(const SceneConfig& cfg, const std::vector<Pose>& poses, const std::array<Vec3, 2>& seg) {
  int n = 0;
  for (const auto& T : poses) n += (is_visible(cfg, T, seg[0]) && is_visible(cfg, T, seg[1])) ? 1 : 0;
  return n;
}

// Largest angle between two viewing rays of a point.
double point_parallax(const SceneConfig& cfg, const std::vector<Pose>& poses, const Vec3& X) {
  std::vector<Vec3> rays;
  for (const auto& T : poses) {
    if (is_visible(cfg, T, X)) rays.push_back((X - T.translation).normalized());
  }
  double best = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (std::size_t j = i + 1; j < rays.size(); ++j) {
      best = std::max(best, std::asin(std::min(1.0, rays[i].cross(rays[j]).norm())));
    }
  }
  return best;
}

// Largest angle between back-projection planes of the noise-free segment.
double line_parallax(const SceneConfig& cfg, const std::vector<Pose>& poses, const std::array<Vec3, 2>& seg) {
  std::vector<Vec3> normals;
  for (const auto& T : poses) {
    if (!is_visible(cfg, T, seg[0]) || !is_visible(cfg, T, seg[1])) continue;
    normals.push_back((seg[0] - T.translation).cross(seg[1] - T.translation).normalized());
  }
  double best = 0.0;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    for (std::size_t j = i + 1; j < normals.size(); ++j) {
      best = std::max(best, std::asin(std::min(1.0, normals[i].cross(normals[j]).norm())));
    }
  }
  return best;
}

struct WallFrame {
  Vec3 origin, u, v, n;
  double uh, vh;
};

WallFrame wall_frame(const WallConfig& w) {
  WallFrame f;
  f.origin = w.origin;
  f.u = w.u_axis.normalized();
  f.v = (w.v_axis - w.v_axis.dot(f.u) * f.u).normalized();
  f.n = f.u.cross(f.v);
  f.uh = w.u_half;
  f.vh = w.v_half;
  return f;
}

}  // namespace

bool is_visible(const SceneConfig& cfg, const Pose& T_wc, const Vec3& X) {
  const Vec3 c = T_wc.to_camera(X);
  if (!(c.z() > cfg.min_depth)) return false;
  const Vec2 px = cfg.camera.intrinsics.project(c);
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < cfg.camera.width && px.y() < cfg.camera.height;
}

std::vector<Pose> trajectory_poses(const SceneConfig& cfg) {
  const auto& t = cfg.trajectory;
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(cfg.n_poses));
  for (int k = 0; k < cfg.n_poses; ++k) {
    const double s = cfg.n_poses > 1 ? static_cast<double>(k) / (cfg.n_poses - 1) : 0.0;
    const double u = s * t.length;
    const Vec3 centre = t.start + Vec3(u, 0.0, t.amplitude * std::sin(2.0 * std::numbers::pi * u / t.period));
    poses.push_back(look_pose(centre, (t.yaw_start_deg + s * t.yaw_sweep_deg) * kDeg));
  }
  return poses;
}

Scene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> uniform01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Scene scene;
  GroundTruth& gt = scene.gt;
  gt.poses = trajectory_poses(cfg);
  std::vector<WallFrame> walls;
  for (const auto& w : cfg.walls) {
    walls.push_back(wall_frame(w));
    gt.planes.push_back(w.plane());
  }
  const int n_walls = static_cast<int>(walls.size());

  for (int i = 0; i < cfg.n_points; ++i) {
    const int r = i % n_walls;
    const WallFrame& w = walls[static_cast<std::size_t>(r)];
    bool placed = false;
    for (int attempt = 0; attempt < cfg.placement_retries && !placed; ++attempt) {
      const Vec3 X = w.origin + unit(rng) * w.uh * w.u + unit(rng) * w.vh * w.v;
      if (count_visible(cfg, gt.poses, X) < 2 || point_parallax(cfg, gt.poses, X) < kMinParallax) continue;
      gt.points.push_back(X);
      placed = true;
    }
    if (!placed) throw Error(ErrorCode::kSceneGeneration, "could not place point " + std::to_string(i));
    gt.point_region.push_back(r);
    gt.point_plane.push_back(r);
  }

  for (int j = 0; j < cfg.n_lines; ++j) {
    const int r = j % n_walls;
    const WallFrame& w = walls[static_cast<std::size_t>(r)];
    bool placed = false;
    for (int attempt = 0; attempt < cfg.placement_retries && !placed; ++attempt) {
      const Vec3 c = w.origin + unit(rng) * w.uh * w.u + unit(rng) * w.vh * w.v;
      const double lo = cfg.line_min_angle_deg * kDeg;
      const double theta = lo + uniform01(rng) * (std::numbers::pi - 2.0 * lo);
      const double len = cfg.line_length_min + uniform01(rng) * (cfg.line_length_max - cfg.line_length_min);
      const Vec3 dir = std::cos(theta) * w.u + std::sin(theta) * w.v;
      const std::array<Vec3, 2> seg{c - 0.5 * len * dir, c + 0.5 * len * dir};
      bool inside = true;
      for (const auto& e : seg) {
        inside = inside && std::abs((e - w.origin).dot(w.u)) <= w.uh && std::abs((e - w.origin).dot(w.v)) <= w.vh;
      }
      if (!inside || count_visible(cfg, gt.poses, seg) < 2) continue;
      if (line_parallax(cfg, gt.poses, seg) < kMinParallax) continue;
      gt.lines.push_back(seg);
      placed = true;
    }
    if (!placed) throw Error(ErrorCode::kSceneGeneration, "could not place line " + std::to_string(j));
    gt.line_region.push_back(r);
    gt.line_plane.push_back(r);
  }

  if (cfg.outlier_fraction > 0.0) {
    for (int r = 0; r < n_walls; ++r) {
      // (is_line, index) of every feature in the region
      std::vector<std::pair<bool, int>> members;
      for (int i = 0; i < cfg.n_points; ++i) {
        if (gt.point_region[static_cast<std::size_t>(i)] == r) members.emplace_back(false, i);
      }
      for (int j = 0; j < cfg.n_lines; ++j) {
        if (gt.line_region[static_cast<std::size_t>(j)] == r) members.emplace_back(true, j);
      }
      std::shuffle(members.begin(), members.end(), rng);
      const auto n_out = static_cast<std::size_t>(std::lround(cfg.outlier_fraction * static_cast<double>(members.size())));
      const Vec3 n = walls[static_cast<std::size_t>(r)].n;
      for (std::size_t m = 0; m < n_out && m < members.size(); ++m) {
        const auto [is_line, idx] = members[m];
        bool moved = false;
        for (int attempt = 0; attempt < cfg.placement_retries && !moved; ++attempt) {
          const double mag = cfg.outlier_offset_min + uniform01(rng) * (cfg.outlier_offset_max - cfg.outlier_offset_min);
          const Vec3 shift = (uniform01(rng) < 0.5 ? -mag : mag) * n;
          if (is_line) {
            auto seg = gt.lines[static_cast<std::size_t>(idx)];
            seg[0] += shift;
            seg[1] += shift;
            if (count_visible(cfg, gt.poses, seg) < 2 || line_parallax(cfg, gt.poses, seg) < kMinParallax) continue;
            gt.lines[static_cast<std::size_t>(idx)] = seg;
            gt.line_plane[static_cast<std::size_t>(idx)] = -1;
          } else {
            const Vec3 X = gt.points[static_cast<std::size_t>(idx)] + shift;
            if (count_visible(cfg, gt.poses, X) < 2 || point_parallax(cfg, gt.poses, X) < kMinParallax) continue;
            gt.points[static_cast<std::size_t>(idx)] = X;
            gt.point_plane[static_cast<std::size_t>(idx)] = -1;
          }
          moved = true;
        }
        if (!moved) throw Error(ErrorCode::kSceneGeneration, "could not displace an outlier feature");
      }
    }
  }

  const auto& K = cfg.camera.intrinsics;
  const double sp = cfg.pixel_noise_sigma;
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    for (std::size_t k = 0; k < gt.poses.size(); ++k) {
      if (!is_visible(cfg, gt.poses[k], gt.points[i])) continue;
      Vec2 px = K.project(gt.poses[k].to_camera(gt.points[i]));
      px += sp * Vec2(gauss(rng), gauss(rng));
      scene.meas.points.push_back({static_cast<int>(k), static_cast<int>(i), px});
    }
  }
  for (std::size_t j = 0; j < gt.lines.size(); ++j) {
    for (std::size_t k = 0; k < gt.poses.size(); ++k) {
      const auto& seg = gt.lines[j];
      if (!is_visible(cfg, gt.poses[k], seg[0]) || !is_visible(cfg, gt.poses[k], seg[1])) continue;
      LinePixels obs{static_cast<int>(k), static_cast<int>(j), {}};
      for (int e = 0; e < 2; ++e) {
        obs.endpoints[static_cast<std::size_t>(e)] = K.project(gt.poses[k].to_camera(seg[static_cast<std::size_t>(e)])) +
                                                     sp * Vec2(gauss(rng), gauss(rng));
      }
      scene.meas.lines.push_back(obs);
    }
  }

  const double st = cfg.odom_sigma_theta_deg * kDeg;
  for (std::size_t k = 0; k + 1 < gt.poses.size(); ++k) {
    const Pose rel = gt.poses[k].inverse() * gt.poses[k + 1];
    const Vec3 n_theta = st * Vec3(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 n_p = cfg.odom_sigma_p * Vec3(gauss(rng), gauss(rng), gauss(rng));
    const Eigen::Quaterniond dq = Eigen::Quaterniond(1.0, 0.5 * n_theta.x(), 0.5 * n_theta.y(), 0.5 * n_theta.z()).normalized();
    Pose meas;
    meas.rotation = (dq * rel.rotation).normalized();
    meas.translation = rel.translation + n_p;
    scene.meas.odometry.push_back(meas);
  }
  return scene;
}

// ---------------------------------------------------------------------------

VariantSpec VariantSpec::parse(const std::string& id) {
  if (id == "P-wo") return {id, false, CoplanarMode::kNone};
  if (id == "P-r") return {id, false, CoplanarMode::kResidual};
  if (id == "P-w") return {id, false, CoplanarMode::kReparam};
  if (id == "PL-wo") return {id, true, CoplanarMode::kNone};
  if (id == "PL-r") return {id, true, CoplanarMode::kResidual};
  if (id == "PL-w") return {id, true, CoplanarMode::kReparam};
  throw Error(ErrorCode::kInvalidInput, "unknown variant '" + id + "'");
}

std::vector<VariantSpec> default_variants() {
  std::vector<VariantSpec> v;
  for (const char* id : {"P-wo", "P-r", "P-w", "PL-r", "PL-w"}) v.push_back(VariantSpec::parse(id));
  return v;
}

std::vector<VariantSpec> accounting_variants() {
  std::vector<VariantSpec> v;
  for (const char* id : {"P-wo", "P-r", "P-w", "PL-wo", "PL-r", "PL-w"}) v.push_back(VariantSpec::parse(id));
  return v;
}

// ---------------------------------------------------------------------------

namespace {

// Point on `line` closest to the ray centre + s * dir.
Vec3 closest_on_line_to_ray(const PluckerLine& line, const Vec3& centre, const Vec3& dir) {
  const Vec3 p0 = line.closest_point_to_origin();
  const Vec3 u = line.direction.normalized();
  const Vec3 w = dir.normalized();
  const double b = u.dot(w);
  const double denom = 1.0 - b * b;
  const Vec3 r = p0 - centre;
  if (denom < 1e-12) return line.closest_point_to(centre);
  const double t = (b * r.dot(w) - r.dot(u)) / denom;
  return p0 + t * u;
}

}  // namespace

FrontEnd run_front_end(const Scene& scene, const SceneConfig& cfg, const RansacConfig& ransac) {
  const GroundTruth& gt = scene.gt;
  const MeasurementSet& meas = scene.meas;
  const auto& K = cfg.camera.intrinsics;
  FrontEnd fe;

  fe.initial_poses.push_back(gt.poses.front());
  for (const auto& odo : meas.odometry) fe.initial_poses.push_back(fe.initial_poses.back() * odo);

  // Map landmarks are triangulated against the ground-truth trajectory.
  std::vector<std::vector<PointObservation>> point_obs(gt.points.size());
  fe.point_anchor.assign(gt.points.size(), -1);
  for (const auto& o : meas.points) {
    const auto i = static_cast<std::size_t>(o.landmark);
    if (fe.point_anchor[i] < 0) fe.point_anchor[i] = o.frame;
    point_obs[i].push_back({gt.poses[static_cast<std::size_t>(o.frame)], o.pixel});
  }
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    if (point_obs[i].size() < 2) throw Error(ErrorCode::kSceneGeneration, "point seen by fewer than two poses");
    fe.map_points.push_back(triangulate_point(point_obs[i], K));
  }

  std::vector<std::vector<LineObservation>> line_obs(gt.lines.size());
  std::vector<std::array<Vec2, 2>> anchor_endpoints(gt.lines.size());
  fe.line_anchor.assign(gt.lines.size(), -1);
  for (const auto& o : meas.lines) {
    const auto j = static_cast<std::size_t>(o.landmark);
    if (fe.line_anchor[j] < 0) {
      fe.line_anchor[j] = o.frame;
      anchor_endpoints[j] = o.endpoints;
    }
    line_obs[j].push_back({gt.poses[static_cast<std::size_t>(o.frame)], o.endpoints});
  }
  for (std::size_t j = 0; j < gt.lines.size(); ++j) {
    std::optional<PluckerLine> line;
    std::array<Vec3, 2> seg{Vec3::Zero(), Vec3::Zero()};
    try {
      line = triangulate_line_multiview(line_obs[j], K);
      const Pose& Ta = gt.poses[static_cast<std::size_t>(fe.line_anchor[j])];
      for (int e = 0; e < 2; ++e) {
        seg[static_cast<std::size_t>(e)] =
            closest_on_line_to_ray(*line, Ta.translation, Ta.R() * backproject(K, anchor_endpoints[j][static_cast<std::size_t>(e)]));
      }
    } catch (const Error&) {
      line.reset();
    }
    fe.map_lines.push_back(line);
    fe.map_line_segments.push_back(seg);
  }

  const std::size_t n_regions = gt.planes.size();
  fe.regions_points.resize(n_regions);
  fe.regions_all.resize(n_regions);
  for (std::size_t r = 0; r < n_regions; ++r) {
    fe.regions_points[r].region_id = static_cast<int>(r);
    fe.regions_all[r].region_id = static_cast<int>(r);
  }
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    const auto r = static_cast<std::size_t>(gt.point_region[i]);
    for (auto* set : {&fe.regions_points[r], &fe.regions_all[r]}) {
      set->point_ids.push_back(static_cast<int>(i));
      set->points.push_back(fe.map_points[i]);
    }
  }
  for (std::size_t j = 0; j < gt.lines.size(); ++j) {
    if (!fe.map_lines[j]) continue;
    auto& set = fe.regions_all[static_cast<std::size_t>(gt.line_region[j])];
    set.line_ids.push_back(static_cast<int>(j));
    set.lines.push_back(fe.map_line_segments[j]);
  }

  for (std::size_t r = 0; r < n_regions; ++r) {
    RansacConfig rc = ransac;
    rc.rng_seed = ransac.rng_seed + cfg.rng_seed * 1000003ULL + r;
    auto fit = [&](const PlanarCandidateSet& set) -> std::optional<PlaneAssociation> {
      if (!gate_region(set, rc.min_features)) return std::nullopt;
      return fit_plane_ransac(set, rc);
    };
    fe.assoc_points.push_back(fit(fe.regions_points[r]));
    fe.assoc_all.push_back(fit(fe.regions_all[r]));
  }
  return fe;
}

// ---------------------------------------------------------------------------

BuiltProblem build_problem(const Scene& scene, const FrontEnd& fe, const VariantSpec& variant,
                           const BenchConfig& cfg) {
  const GroundTruth& gt = scene.gt;
  const MeasurementSet& meas = scene.meas;
  const auto& K = cfg.scene.camera.intrinsics;
  BuiltProblem out;
  Problem& pb = out.problem;
  State& st = out.initial;

  pb.camera = K;
  pb.loss = cfg.solver.loss == LossKind::kCauchy ? RobustLoss::cauchy(cfg.solver.loss_scale) : RobustLoss::none();
  st.poses = fe.initial_poses;
  pb.pose_fixed.assign(st.poses.size(), false);
  pb.pose_fixed[0] = true;

  const double sigma_px = cfg.scene.pixel_noise_sigma > 0.0 ? cfg.scene.pixel_noise_sigma : 1.0;
  const double sigma_p = cfg.scene.odom_sigma_p > 0.0 ? cfg.scene.odom_sigma_p : 0.1;
  const double sigma_t = (cfg.scene.odom_sigma_theta_deg > 0.0 ? cfg.scene.odom_sigma_theta_deg : 1.0) * kDeg;

  // Plane blocks and landmark memberships.
  std::vector<int> point_plane(gt.points.size(), -1), line_plane(gt.lines.size(), -1);
  if (variant.mode != CoplanarMode::kNone) {
    const auto& assoc = variant.uses_lines ? fe.assoc_all : fe.assoc_points;
    const auto& regions = variant.uses_lines ? fe.regions_all : fe.regions_points;
    for (std::size_t r = 0; r < assoc.size(); ++r) {
      if (!assoc[r]) {
        if (regions[r].size() > 0) ++out.degraded_regions;
        continue;
      }
      const int plane_id = static_cast<int>(st.planes.size());
      st.planes.push_back(assoc[r]->plane);
      for (int i : assoc[r]->point_ids) point_plane[static_cast<std::size_t>(i)] = plane_id;
      if (variant.uses_lines) {
        for (int j : assoc[r]->line_ids) line_plane[static_cast<std::size_t>(j)] = plane_id;
      }
    }
  }

  // Landmarks: points first, then lines.
  std::vector<int> point_lm(gt.points.size(), -1), line_lm(gt.lines.size(), -1);
  std::vector<Vec2> anchor_pixel(gt.points.size());
  for (const auto& o : meas.points) {
    if (o.frame == fe.point_anchor[static_cast<std::size_t>(o.landmark)]) anchor_pixel[static_cast<std::size_t>(o.landmark)] = o.pixel;
  }
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    const int anchor = fe.point_anchor[i];
    const Pose& Ta = st.poses[static_cast<std::size_t>(anchor)];
    const int plane_id = point_plane[i];
    const int lm = static_cast<int>(st.landmarks.size());
    point_lm[i] = lm;
    bool coplanar = false;
    if (variant.mode == CoplanarMode::kReparam && plane_id >= 0) {
      const Vec3 ray = (Ta.R() * backproject(K, anchor_pixel[i])).normalized();
      const Plane& pl = st.planes[static_cast<std::size_t>(plane_id)];
      coplanar = std::abs(pl.normal.dot(ray)) >= std::sin(kMinIncidence);
      if (coplanar) {
        const CoPlanarPoint cp{plane_id, anchor, anchor_pixel[i]};
        const Vec3 X = coplanar_point_position(cp, pl, Ta, K);
        coplanar = Ta.to_camera(X).z() > 0.0;
      }
      if (coplanar) st.landmarks.emplace_back(CoPlanarPoint{plane_id, anchor, anchor_pixel[i]});
      else ++out.demoted_landmarks;
    }
    if (!coplanar) {
      const Pose& Ta_map = gt.poses[static_cast<std::size_t>(anchor)];
      double z = Ta_map.to_camera(fe.map_points[i]).z();
      if (!(z > 1e-3)) z = std::max((fe.map_points[i] - Ta_map.translation).norm(), 1e-3);
      if (variant.mode == CoplanarMode::kResidual && plane_id >= 0) {
        // Plane inliers start on the plane, as they do in the co-planar form.
        try {
          const Plane local = plane_to_camera(st.planes[static_cast<std::size_t>(plane_id)], Ta);
          const double h = depth_from_plane(local, K, anchor_pixel[i]);
          if (h > 1e-3) z = h;
        } catch (const Error&) {
        }
      }
      st.landmarks.emplace_back(InverseDepthPoint{anchor, anchor_pixel[i], 1.0 / z});
      if (variant.mode == CoplanarMode::kResidual && plane_id >= 0) {
        pb.edges.push_back(ResidualEdge::point_on_plane(lm, plane_id, cfg.solver.plane_sigma));
      }
    }
  }

  if (variant.uses_lines) {
    std::vector<std::array<Vec2, 2>> anchor_endpoints(gt.lines.size());
    for (const auto& o : meas.lines) {
      if (o.frame == fe.line_anchor[static_cast<std::size_t>(o.landmark)]) anchor_endpoints[static_cast<std::size_t>(o.landmark)] = o.endpoints;
    }
    for (std::size_t j = 0; j < gt.lines.size(); ++j) {
      if (!fe.map_lines[j]) continue;
      const int anchor = fe.line_anchor[j];
      const Pose& Ta = st.poses[static_cast<std::size_t>(anchor)];
      const int plane_id = line_plane[j];
      const int lm = static_cast<int>(st.landmarks.size());
      line_lm[j] = lm;
      bool coplanar = false;
      if (variant.mode == CoplanarMode::kReparam && plane_id >= 0) {
        const Plane& pl = st.planes[static_cast<std::size_t>(plane_id)];
        try {
          const Plane bp = backprojection_plane(Ta, K, anchor_endpoints[j]);
          coplanar = bp.normal.cross(pl.normal).norm() >= std::sin(kMinIncidence);
        } catch (const Error&) {
          coplanar = false;
        }
        if (coplanar) st.landmarks.emplace_back(CoPlanarLine{plane_id, anchor, anchor_endpoints[j]});
        else ++out.demoted_landmarks;
      }
      if (!coplanar) {
        PluckerLine init = *fe.map_lines[j];
        if (variant.mode == CoplanarMode::kResidual && plane_id >= 0) {
          try {
            init = coplanar_line_plucker(CoPlanarLine{plane_id, anchor, anchor_endpoints[j]},
                                         st.planes[static_cast<std::size_t>(plane_id)], Ta, K);
          } catch (const Error&) {
          }
        }
        st.landmarks.emplace_back(plucker_to_orthonormal(init));
        if (variant.mode == CoplanarMode::kResidual && plane_id >= 0) {
          const auto& seg = fe.map_line_segments[j];
          pb.edges.push_back(ResidualEdge::line_on_plane(lm, plane_id, init.closest_point_to(0.5 * (seg[0] + seg[1])),
                                                         std::max(0.5 * (seg[1] - seg[0]).norm(), 0.05),
                                                         cfg.solver.plane_sigma));
        }
      }
    }
  }

  for (const auto& o : meas.points) {
    const int lm = point_lm[static_cast<std::size_t>(o.landmark)];
    if (o.frame == fe.point_anchor[static_cast<std::size_t>(o.landmark)]) continue;
    pb.edges.push_back(ResidualEdge::point(o.frame, lm, o.pixel, sigma_px));
  }
  if (variant.uses_lines) {
    for (const auto& o : meas.lines) {
      const int lm = line_lm[static_cast<std::size_t>(o.landmark)];
      if (lm < 0) continue;
      const bool anchored = std::holds_alternative<CoPlanarLine>(st.landmarks[static_cast<std::size_t>(lm)]);
      if (anchored && o.frame == fe.line_anchor[static_cast<std::size_t>(o.landmark)]) continue;
      pb.edges.push_back(ResidualEdge::line(o.frame, lm, o.endpoints, sigma_px));
    }
  }
  for (std::size_t k = 0; k < meas.odometry.size(); ++k) {
    pb.edges.push_back(ResidualEdge::odometry(static_cast<int>(k), static_cast<int>(k + 1), meas.odometry[k],
                                              sigma_p, sigma_t));
  }
  return out;
}

BuiltProblem build_problem(const Scene& scene, const VariantSpec& variant, const BenchConfig& cfg) {
  return build_problem(scene, run_front_end(scene, cfg.scene, cfg.ransac), variant, cfg);
}

// ---------------------------------------------------------------------------

double ate_rmse(const std::vector<Pose>& estimated, const std::vector<Pose>& ground_truth, Alignment align) {
  if (estimated.size() != ground_truth.size()) {
    throw Error(ErrorCode::kInvalidInput, "trajectories differ in length");
  }
  if (estimated.empty()) throw Error(ErrorCode::kInvalidInput, "trajectories are empty");
  const auto n = static_cast<Eigen::Index>(estimated.size());
  Eigen::Matrix3Xd est(3, n), ref(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    est.col(i) = estimated[static_cast<std::size_t>(i)].translation;
    ref.col(i) = ground_truth[static_cast<std::size_t>(i)].translation;
  }
  if (align == Alignment::kRigid) {
    const Eigen::Matrix4d T = Eigen::umeyama(est, ref, false);
    est = (T.topLeftCorner<3, 3>() * est).colwise() + T.topRightCorner<3, 1>();
  }
  return std::sqrt((est - ref).colwise().squaredNorm().mean());
}

// ---------------------------------------------------------------------------

RunReport run_variant(const Scene& scene, const FrontEnd& fe, const VariantSpec& variant,
                      const BenchConfig& cfg, std::uint64_t seed) {
  RunReport rep;
  rep.variant = variant.id;
  rep.seed = seed;
  try {
    BuiltProblem built = build_problem(scene, fe, variant, cfg);
    const ItemCount ic = count_items_parameters(built.problem, built.initial);
    rep.items = ic.items;
    rep.parameters = ic.parameters;
    rep.degraded_regions = built.degraded_regions;
    SolverOptions opts;
    opts.max_iterations = cfg.solver.max_iterations;
    opts.mode = cfg.solver.mode;
    State state = built.initial;
    const SolveReport sr = optimize(built.problem, state, opts);
    rep.iterations = sr.iterations;
    rep.converged = sr.converged;
    rep.final_cost = sr.final_cost;
    rep.opt_time_s = sr.times.total();
    rep.rmse_m = ate_rmse(state.poses, scene.gt.poses, Alignment::kRigid);
    if (!std::isfinite(rep.rmse_m) || !std::isfinite(rep.final_cost)) {
      throw Error(ErrorCode::kInvalidInput, "optimisation diverged");
    }
  } catch (const Error& e) {
    rep.ok = false;
    rep.error = e.what();
  }
  return rep;
}

MonteCarloResult run_monte_carlo(const BenchConfig& cfg, const std::vector<VariantSpec>& variants,
                                 int n_runs, std::uint64_t base_seed, int jobs) {
  if (n_runs < 1) throw Error(ErrorCode::kInvalidInput, "n_runs must be at least 1");
  if (variants.empty()) throw Error(ErrorCode::kInvalidInput, "no variants requested");
  std::vector<std::vector<RunReport>> per_run(static_cast<std::size_t>(n_runs));
  std::atomic<int> next{0};

  auto worker = [&]() {
    for (int r = next++; r < n_runs; r = next++) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
      auto& out = per_run[static_cast<std::size_t>(r)];
      try {
        SceneConfig sc = cfg.scene;
        sc.rng_seed = seed;
        const Scene scene = generate_scene(sc);
        const FrontEnd fe = run_front_end(scene, sc, cfg.ransac);
        BenchConfig run_cfg = cfg;
        run_cfg.scene = sc;
        for (const auto& v : variants) out.push_back(run_variant(scene, fe, v, run_cfg, seed));
      } catch (const Error& e) {
        out.clear();
        for (const auto& v : variants) {
          RunReport rep;
          rep.variant = v.id;
          rep.seed = seed;
          rep.ok = false;
          rep.error = e.what();
          out.push_back(rep);
        }
      }
    }
  };

  const int n_threads = std::clamp(jobs, 1, n_runs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  MonteCarloResult result;
  for (auto& runs : per_run) {
    for (auto& rep : runs) result.runs.push_back(std::move(rep));
  }
  result.summary = summarize(result.runs, variants);
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<VariantSummary> summarize(const std::vector<RunReport>& runs, const std::vector<VariantSpec>& variants) {
  std::vector<VariantSummary> out;
  for (const auto& v : variants) {
    VariantSummary s;
    s.variant = v.id;
    std::vector<double> rmse, time, iters;
    std::vector<int> items, params;
    for (const auto& r : runs) {
      if (r.variant != v.id) continue;
      if (!r.ok) {
        ++s.runs_failed;
        continue;
      }
      ++s.runs_ok;
      rmse.push_back(r.rmse_m);
      time.push_back(r.opt_time_s);
      iters.push_back(r.iterations);
      items.push_back(r.items);
      params.push_back(r.parameters);
    }
    if (s.runs_ok > 0) {
      s.median_rmse_m = median(rmse);
      s.median_time_s = median(time);
      s.median_iterations = median(iters);
      std::sort(items.begin(), items.end());
      std::sort(params.begin(), params.end());
      s.items = items[(items.size() - 1) / 2];
      s.parameters = params[(params.size() - 1) / 2];
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace cpba

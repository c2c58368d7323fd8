#include "cpba/scene_config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "cpba/error.hpp"

namespace cpba {

Plane WallConfig::plane() const {
  const Vec3 n = u_axis.cross(v_axis);
  return canonical_plane(Plane::from_coefficients(n, -n.dot(origin)));
}

void SceneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfigParse, msg); };
  if (n_points < 0 || n_lines < 0 || n_points + n_lines == 0) fail("scene needs at least one landmark");
  if (n_poses < 2) fail("n_poses must be at least 2");
  if (walls.empty()) fail("at least one wall is required");
  for (const auto& w : walls) {
    if (!(w.u_half > 0.0 && w.v_half > 0.0)) fail("wall extents must be positive");
    if (!(w.u_axis.cross(w.v_axis).norm() > 1e-9)) fail("wall axes must not be parallel");
  }
  if (!(trajectory.period > 0.0) || !(trajectory.length > 0.0)) fail("trajectory period and length must be positive");
  if (!(line_length_min > 0.0 && line_length_max >= line_length_min)) fail("invalid line length range");
  if (!(line_min_angle_deg >= 0.0 && line_min_angle_deg < 90.0)) fail("line_min_angle_deg must lie in [0, 90)");
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) fail("outlier_fraction must lie in [0, 1]");
  if (!(outlier_offset_min > 0.0 && outlier_offset_max >= outlier_offset_min)) fail("invalid outlier offset range");
  if (!(pixel_noise_sigma >= 0.0 && odom_sigma_theta_deg >= 0.0 && odom_sigma_p >= 0.0)) fail("sigmas must be non-negative");
  if (camera.width <= 0 || camera.height <= 0) fail("image size must be positive");
  if (!(min_depth > 0.0)) fail("min_depth must be positive");
  if (placement_retries < 1) fail("placement_retries must be positive");
  try {
    camera.intrinsics.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

namespace {

WallConfig wall(const Vec3& origin, const Vec3& u, const Vec3& v, double uh, double vh) {
  WallConfig w;
  w.origin = origin;
  w.u_axis = u;
  w.v_axis = v;
  w.u_half = uh;
  w.v_half = vh;
  return w;
}

}  // namespace

BenchConfig preset_sequence_b() {
  BenchConfig c;
  c.scene.name = "sequence_b";
  c.scene.n_points = 50;
  c.scene.n_lines = 20;
  c.scene.n_poses = 50;
  c.scene.trajectory = TrajectoryConfig{1.0, 10.0, 20.0, Vec3::Zero(), 90.0, 0.0};
  c.scene.walls = {wall(Vec3(10.0, 6.0, 0.0), Vec3::UnitX(), Vec3::UnitZ(), 10.0, 2.0)};
  c.scene.rng_seed = 1;
  c.n_runs = 30;
  return c;
}

BenchConfig preset_sequence_a() {
  BenchConfig c;
  c.scene.name = "sequence_a";
  c.scene.n_points = 200;
  c.scene.n_lines = 100;
  c.scene.n_poses = 150;
  c.scene.trajectory = TrajectoryConfig{1.0, 10.0, 20.0, Vec3(-10.0, 0.0, 0.0), 90.0, 360.0};
  c.scene.walls = {
      wall(Vec3(0.0, 12.0, 0.0), Vec3::UnitX(), Vec3::UnitZ(), 12.0, 3.0),
      wall(Vec3(-12.0, 0.0, 0.0), Vec3::UnitY(), Vec3::UnitZ(), 12.0, 3.0),
      wall(Vec3(0.0, -12.0, 0.0), Vec3::UnitX(), Vec3::UnitZ(), 12.0, 3.0),
      wall(Vec3(12.0, 0.0, 0.0), Vec3::UnitY(), Vec3::UnitZ(), 12.0, 3.0),
  };
  c.scene.line_length_min = 1.0;
  c.scene.line_length_max = 2.5;
  c.scene.rng_seed = 1;
  c.n_runs = 30;
  return c;
}

BenchConfig preset(const std::string& name) {
  if (name == "sequence_a") return preset_sequence_a();
  if (name == "sequence_b") return preset_sequence_b();
  throw Error(ErrorCode::kConfigParse, "unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void parse_fail(const std::string& msg) { throw Error(ErrorCode::kConfigParse, msg); }

void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed) {
  if (!node.IsMap()) parse_fail(where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) parse_fail("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (!node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception& e) {
    parse_fail(std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_vec3(const YAML::Node& node, const char* key, Vec3& out) {
  if (!node[key]) return;
  const auto& n = node[key];
  if (!n.IsSequence() || n.size() != 3) parse_fail(std::string("'") + key + "' must be a list of 3 numbers");
  try {
    out = Vec3(n[0].as<double>(), n[1].as<double>(), n[2].as<double>());
  } catch (const YAML::Exception& e) {
    parse_fail(std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_scene(const YAML::Node& n, SceneConfig& s) {
  check_keys(n, "scene", {"name", "n_points", "n_lines", "n_poses", "trajectory", "walls", "line_length_min",
                          "line_length_max", "line_min_angle_deg", "min_depth", "outlier_fraction", "outlier_offset_min",
                          "outlier_offset_max", "placement_retries", "seed"});
  read(n, "name", s.name);
  read(n, "n_points", s.n_points);
  read(n, "n_lines", s.n_lines);
  read(n, "n_poses", s.n_poses);
  read(n, "line_length_min", s.line_length_min);
  read(n, "line_length_max", s.line_length_max);
  read(n, "line_min_angle_deg", s.line_min_angle_deg);
  read(n, "min_depth", s.min_depth);
  read(n, "outlier_fraction", s.outlier_fraction);
  read(n, "outlier_offset_min", s.outlier_offset_min);
  read(n, "outlier_offset_max", s.outlier_offset_max);
  read(n, "placement_retries", s.placement_retries);
  read(n, "seed", s.rng_seed);
  if (const auto t = n["trajectory"]) {
    check_keys(t, "scene.trajectory", {"amplitude", "period", "length", "start", "yaw_start_deg", "yaw_sweep_deg"});
    read(t, "amplitude", s.trajectory.amplitude);
    read(t, "period", s.trajectory.period);
    read(t, "length", s.trajectory.length);
    read_vec3(t, "start", s.trajectory.start);
    read(t, "yaw_start_deg", s.trajectory.yaw_start_deg);
    read(t, "yaw_sweep_deg", s.trajectory.yaw_sweep_deg);
  }
  if (const auto w = n["walls"]) {
    if (!w.IsSequence()) parse_fail("scene.walls must be a list");
    s.walls.clear();
    for (const auto& item : w) {
      check_keys(item, "scene.walls[]", {"origin", "u_axis", "v_axis", "u_half", "v_half"});
      WallConfig wc;
      read_vec3(item, "origin", wc.origin);
      read_vec3(item, "u_axis", wc.u_axis);
      read_vec3(item, "v_axis", wc.v_axis);
      read(item, "u_half", wc.u_half);
      read(item, "v_half", wc.v_half);
      s.walls.push_back(wc);
    }
  }
}

}  // namespace

BenchConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    parse_fail(std::string("YAML syntax error: ") + e.what());
  }
  if (!root || root.IsNull()) parse_fail("config is empty");
  check_keys(root, "config", {"preset", "n_runs", "scene", "noise", "camera", "ransac", "solver"});

  std::string base = "sequence_b";
  read(root, "preset", base);
  BenchConfig c = preset(base);
  read(root, "n_runs", c.n_runs);
  if (const auto s = root["scene"]) read_scene(s, c.scene);
  if (const auto n = root["noise"]) {
    check_keys(n, "noise", {"pixel_sigma", "odom_sigma_theta_deg", "odom_sigma_p"});
    read(n, "pixel_sigma", c.scene.pixel_noise_sigma);
    read(n, "odom_sigma_theta_deg", c.scene.odom_sigma_theta_deg);
    read(n, "odom_sigma_p", c.scene.odom_sigma_p);
  }
  if (const auto k = root["camera"]) {
    check_keys(k, "camera", {"width", "height", "fx", "fy", "cx", "cy"});
    read(k, "width", c.scene.camera.width);
    read(k, "height", c.scene.camera.height);
    read(k, "fx", c.scene.camera.intrinsics.fx);
    read(k, "fy", c.scene.camera.intrinsics.fy);
    read(k, "cx", c.scene.camera.intrinsics.cx);
    read(k, "cy", c.scene.camera.intrinsics.cy);
  }
  if (const auto r = root["ransac"]) {
    check_keys(r, "ransac", {"inlier_distance", "consensus_fraction", "max_iterations", "min_features", "seed"});
    read(r, "inlier_distance", c.ransac.inlier_distance);
    read(r, "consensus_fraction", c.ransac.consensus_fraction);
    read(r, "max_iterations", c.ransac.max_iterations);
    read(r, "min_features", c.ransac.min_features);
    read(r, "seed", c.ransac.rng_seed);
  }
  if (const auto v = root["solver"]) {
    check_keys(v, "solver", {"max_iterations", "mode", "loss", "loss_scale", "plane_sigma"});
    read(v, "max_iterations", c.solver.max_iterations);
    std::string mode;
    read(v, "mode", mode);
    if (mode == "gn") c.solver.mode = SolverMode::kGaussNewton;
    else if (mode == "lm") c.solver.mode = SolverMode::kLevenbergMarquardt;
    else if (!mode.empty()) parse_fail("solver.mode must be gn or lm");
    std::string loss;
    read(v, "loss", loss);
    if (loss == "none") c.solver.loss = LossKind::kNone;
    else if (loss == "cauchy") c.solver.loss = LossKind::kCauchy;
    else if (!loss.empty()) parse_fail("solver.loss must be none or cauchy");
    read(v, "loss_scale", c.solver.loss_scale);
    read(v, "plane_sigma", c.solver.plane_sigma);
  }

  if (c.n_runs < 1) parse_fail("n_runs must be at least 1");
  if (c.solver.max_iterations < 0) parse_fail("solver.max_iterations must be non-negative");
  if (!(c.solver.loss_scale > 0.0)) parse_fail("solver.loss_scale must be positive");
  if (!(c.solver.plane_sigma > 0.0)) parse_fail("solver.plane_sigma must be positive");
  c.scene.validate();
  try {
    c.ransac.validate();
  } catch (const Error& e) {
    parse_fail(e.what());
  }
  return c;
}

BenchConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigParse, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

YAML::Node vec3_node(const Vec3& v) {
  YAML::Node n;
  n.SetStyle(YAML::EmitterStyle::Flow);
  for (int i = 0; i < 3; ++i) n.push_back(v[i]);
  return n;
}

}  // namespace

std::string to_yaml(const BenchConfig& c) {
  const SceneConfig& s = c.scene;
  YAML::Node root;
  root["n_runs"] = c.n_runs;
  YAML::Node scene;
  scene["name"] = s.name;
  scene["n_points"] = s.n_points;
  scene["n_lines"] = s.n_lines;
  scene["n_poses"] = s.n_poses;
  scene["trajectory"]["amplitude"] = s.trajectory.amplitude;
  scene["trajectory"]["period"] = s.trajectory.period;
  scene["trajectory"]["length"] = s.trajectory.length;
  scene["trajectory"]["start"] = vec3_node(s.trajectory.start);
  scene["trajectory"]["yaw_start_deg"] = s.trajectory.yaw_start_deg;
  scene["trajectory"]["yaw_sweep_deg"] = s.trajectory.yaw_sweep_deg;
  for (const auto& w : s.walls) {
    YAML::Node wn;
    wn["origin"] = vec3_node(w.origin);
    wn["u_axis"] = vec3_node(w.u_axis);
    wn["v_axis"] = vec3_node(w.v_axis);
    wn["u_half"] = w.u_half;
    wn["v_half"] = w.v_half;
    scene["walls"].push_back(wn);
  }
  scene["line_length_min"] = s.line_length_min;
  scene["line_length_max"] = s.line_length_max;
  scene["line_min_angle_deg"] = s.line_min_angle_deg;
  scene["min_depth"] = s.min_depth;
  scene["outlier_fraction"] = s.outlier_fraction;
  scene["outlier_offset_min"] = s.outlier_offset_min;
  scene["outlier_offset_max"] = s.outlier_offset_max;
  scene["placement_retries"] = s.placement_retries;
  scene["seed"] = s.rng_seed;
  root["scene"] = scene;
  root["noise"]["pixel_sigma"] = s.pixel_noise_sigma;
  root["noise"]["odom_sigma_theta_deg"] = s.odom_sigma_theta_deg;
  root["noise"]["odom_sigma_p"] = s.odom_sigma_p;
  root["camera"]["width"] = s.camera.width;
  root["camera"]["height"] = s.camera.height;
  root["camera"]["fx"] = s.camera.intrinsics.fx;
  root["camera"]["fy"] = s.camera.intrinsics.fy;
  root["camera"]["cx"] = s.camera.intrinsics.cx;
  root["camera"]["cy"] = s.camera.intrinsics.cy;
  root["ransac"]["inlier_distance"] = c.ransac.inlier_distance;
  root["ransac"]["consensus_fraction"] = c.ransac.consensus_fraction;
  root["ransac"]["max_iterations"] = c.ransac.max_iterations;
  root["ransac"]["min_features"] = c.ransac.min_features;
  root["ransac"]["seed"] = c.ransac.rng_seed;
  root["solver"]["max_iterations"] = c.solver.max_iterations;
  root["solver"]["mode"] = c.solver.mode == SolverMode::kGaussNewton ? "gn" : "lm";
  root["solver"]["loss"] = c.solver.loss == LossKind::kCauchy ? "cauchy" : "none";
  root["solver"]["loss_scale"] = c.solver.loss_scale;
  root["solver"]["plane_sigma"] = c.solver.plane_sigma;
  YAML::Emitter out;
  out << root;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const BenchConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_yaml(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cpba

#include "cpba/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cpba/error.hpp"

namespace cpba {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::uint64_t effective_seed(const CliInvocation& inv, const BenchConfig& cfg) {
  return inv.seed.value_or(cfg.scene.rng_seed);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kInvalidInput, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::kInvalidInput, "write failed for " + path.string());
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kInvalidInput, "cannot create output directory " + dir + ": " + ec.message());
}

}  // namespace

BenchConfig resolve_config(const CliInvocation& inv) {
  if (inv.config.empty()) return preset_sequence_b();
  if (!fs::exists(inv.config) && (inv.config == "sequence_a" || inv.config == "sequence_b")) {
    return preset(inv.config);
  }
  return load_config(inv.config);
}

std::vector<VariantSpec> resolve_variants(const CliInvocation& inv) {
  std::set<std::string> wanted;
  for (const auto& v : inv.variants) {
    if (v.empty()) continue;
    VariantSpec::parse(v);
    wanted.insert(v);
  }
  std::vector<VariantSpec> out;
  for (const auto& v : accounting_variants()) {
    const bool in_default = v.id != "PL-wo";
    if (wanted.empty() ? (in_default || inv.include_accounting) : (wanted.count(v.id) > 0 || (inv.include_accounting && v.id == "PL-wo"))) {
      out.push_back(v);
    }
  }
  return out;
}

std::string provenance_line(const BenchConfig& cfg, std::uint64_t seed) {
  return "# config=" + cfg.scene.name + " hash=" + config_hash(cfg) + " seed=" + std::to_string(seed);
}

void write_runs_csv(std::ostream& os, const std::vector<RunReport>& runs) {
  os << "variant,seed,rmse_m,opt_time_s,items,parameters,iterations,converged\n";
  for (const auto& r : runs) {
    if (!r.ok) continue;
    os << r.variant << ',' << r.seed << ',' << fmt("%.9f", r.rmse_m) << ',' << fmt("%.6f", r.opt_time_s) << ','
       << r.items << ',' << r.parameters << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<VariantSummary>& summary) {
  os << "variant,runs_ok,runs_failed,median_rmse_m,median_opt_time_s,items,parameters,median_iterations\n";
  for (const auto& s : summary) {
    os << s.variant << ',' << s.runs_ok << ',' << s.runs_failed << ',' << fmt("%.9f", s.median_rmse_m) << ','
       << fmt("%.6f", s.median_time_s) << ',' << s.items << ',' << s.parameters << ','
       << fmt("%.1f", s.median_iterations) << '\n';
  }
}

void write_runs_jsonl(std::ostream& os, const std::vector<RunReport>& runs) {
  for (const auto& r : runs) {
    if (!r.ok) continue;
    nlohmann::ordered_json j;
    j["variant"] = r.variant;
    j["seed"] = r.seed;
    j["rmse_m"] = r.rmse_m;
    j["opt_time_s"] = r.opt_time_s;
    j["items"] = r.items;
    j["parameters"] = r.parameters;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged ? 1 : 0;
    os << j.dump() << '\n';
  }
}

void write_summary_jsonl(std::ostream& os, const std::vector<VariantSummary>& summary) {
  for (const auto& s : summary) {
    nlohmann::ordered_json j;
    j["variant"] = s.variant;
    j["runs_ok"] = s.runs_ok;
    j["runs_failed"] = s.runs_failed;
    j["median_rmse_m"] = s.median_rmse_m;
    j["median_opt_time_s"] = s.median_time_s;
    j["items"] = s.items;
    j["parameters"] = s.parameters;
    j["median_iterations"] = s.median_iterations;
    os << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CliInvocation& inv, std::ostream& log, std::ostream& /*err*/) {
  BenchConfig cfg = resolve_config(inv);
  const std::string prov = provenance_line(cfg, effective_seed(inv, cfg));
  cfg.scene.rng_seed = effective_seed(inv, cfg);
  const Scene scene = generate_scene(cfg.scene);
  const FrontEnd fe = run_front_end(scene, cfg.scene, cfg.ransac);

  std::ostringstream traj;
  traj << prov << '\n' << "frame,x,y,z,qw,qx,qy,qz,odom_x,odom_y,odom_z\n";
  for (std::size_t k = 0; k < scene.gt.poses.size(); ++k) {
    const auto& p = scene.gt.poses[k];
    const auto& o = fe.initial_poses[k];
    traj << k;
    for (double v : {p.translation.x(), p.translation.y(), p.translation.z(), p.rotation.w(), p.rotation.x(),
                     p.rotation.y(), p.rotation.z(), o.translation.x(), o.translation.y(), o.translation.z()}) {
      traj << ',' << fmt("%.9f", v);
    }
    traj << '\n';
  }

  std::ostringstream lms;
  lms << prov << '\n' << "kind,id,region,plane,x0,y0,z0,x1,y1,z1,observations\n";
  std::vector<int> pobs(scene.gt.points.size(), 0), lobs(scene.gt.lines.size(), 0);
  for (const auto& o : scene.meas.points) ++pobs[static_cast<std::size_t>(o.landmark)];
  for (const auto& o : scene.meas.lines) ++lobs[static_cast<std::size_t>(o.landmark)];
  for (std::size_t i = 0; i < scene.gt.points.size(); ++i) {
    const Vec3& X = scene.gt.points[i];
    lms << "point," << i << ',' << scene.gt.point_region[i] << ',' << scene.gt.point_plane[i];
    for (int k = 0; k < 3; ++k) lms << ',' << fmt("%.9f", X[k]);
    lms << ",,,," << pobs[i] << '\n';
  }
  for (std::size_t j = 0; j < scene.gt.lines.size(); ++j) {
    lms << "line," << j << ',' << scene.gt.line_region[j] << ',' << scene.gt.line_plane[j];
    for (const auto& e : scene.gt.lines[j]) {
      for (int k = 0; k < 3; ++k) lms << ',' << fmt("%.9f", e[k]);
    }
    lms << ',' << lobs[j] << '\n';
  }

  ensure_dir(inv.out_dir);
  write_file(fs::path(inv.out_dir) / "trajectory.csv", traj.str());
  write_file(fs::path(inv.out_dir) / "landmarks.csv", lms.str());
  log << "simulated " << cfg.scene.name << ": " << scene.gt.poses.size() << " poses, " << scene.gt.points.size()
      << " points, " << scene.gt.lines.size() << " lines, " << scene.meas.points.size() << " point and "
      << scene.meas.lines.size() << " line observations\n";
  return kExitOk;
}

int cmd_bench(const CliInvocation& inv, std::ostream& log, std::ostream& /*err*/) {
  const BenchConfig cfg = resolve_config(inv);
  const auto variants = resolve_variants(inv);
  const int n_runs = inv.n_runs.value_or(cfg.n_runs);
  if (n_runs < 1) throw Error(ErrorCode::kInvalidInput, "--n-runs must be at least 1");
  const std::uint64_t seed = effective_seed(inv, cfg);

  const MonteCarloResult mc = run_monte_carlo(cfg, variants, n_runs, seed, inv.jobs);
  const std::string prov = provenance_line(cfg, seed);

  std::ostringstream runs, summary;
  std::string ext;
  if (inv.format == OutputFormat::kCsv) {
    runs << prov << '\n';
    summary << prov << '\n';
    write_runs_csv(runs, mc.runs);
    write_summary_csv(summary, mc.summary);
    ext = ".csv";
  } else {
    nlohmann::ordered_json p;
    p["provenance"] = {{"config", cfg.scene.name}, {"hash", config_hash(cfg)}, {"seed", seed}};
    runs << p.dump() << '\n';
    summary << p.dump() << '\n';
    write_runs_jsonl(runs, mc.runs);
    write_summary_jsonl(summary, mc.summary);
    ext = ".jsonl";
  }
  ensure_dir(inv.out_dir);
  write_file(fs::path(inv.out_dir) / ("runs" + ext), runs.str());
  write_file(fs::path(inv.out_dir) / ("summary" + ext), summary.str());

  for (const auto& s : mc.summary) {
    log << s.variant << ": ok " << s.runs_ok << ", failed " << s.runs_failed << ", median rmse "
        << fmt("%.4f", s.median_rmse_m) << " m, median time " << fmt("%.4f", s.median_time_s) << " s, items "
        << s.items << ", parameters " << s.parameters << '\n';
  }
  return kExitOk;
}

int cmd_hessian(const CliInvocation& inv, std::ostream& log, std::ostream& /*err*/) {
  BenchConfig cfg = resolve_config(inv);
  const auto variants = resolve_variants(inv);
  const std::string prov = provenance_line(cfg, effective_seed(inv, cfg));
  cfg.scene.rng_seed = effective_seed(inv, cfg);
  const Scene scene = generate_scene(cfg.scene);
  const FrontEnd fe = run_front_end(scene, cfg.scene, cfg.ransac);

  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& v : variants) {
    const BuiltProblem built = build_problem(scene, fe, v, cfg);
    const HessianPattern pattern = hessian_pattern(built.problem, built.initial);
    std::ostringstream os;
    write_hessian_pattern(os, pattern, prov.substr(2) + " variant=" + v.id);
    files.emplace_back("hessian_" + v.id + ".txt", os.str());
    log << v.id << ": dim " << pattern.total_dim() << ", nonzeros " << pattern.scalar_nonzeros()
        << ", off-diagonal " << pattern.offdiagonal_scalar_nonzeros() << '\n';
  }
  ensure_dir(inv.out_dir);
  for (const auto& [name, content] : files) write_file(fs::path(inv.out_dir) / name, content);
  return kExitOk;
}

int cmd_ransac_demo(const CliInvocation& inv, std::ostream& log, std::ostream& /*err*/) {
  const BenchConfig cfg = resolve_config(inv);
  const int n_runs = inv.n_runs.value_or(cfg.n_runs);
  if (n_runs < 1) throw Error(ErrorCode::kInvalidInput, "--n-runs must be at least 1");
  const std::uint64_t seed = effective_seed(inv, cfg);

  std::ostringstream os;
  os << provenance_line(cfg, seed) << '\n';
  os << "seed,region,accepted,candidates,inliers,true_members,precision,recall,nx,ny,nz,d\n";
  int accepted_total = 0, rows = 0;
  for (int r = 0; r < n_runs; ++r) {
    SceneConfig sc = cfg.scene;
    sc.rng_seed = seed + static_cast<std::uint64_t>(r);
    const Scene scene = generate_scene(sc);
    const FrontEnd fe = run_front_end(scene, sc, cfg.ransac);
    for (std::size_t g = 0; g < fe.regions_all.size(); ++g) {
      const auto& set = fe.regions_all[g];
      const auto& assoc = fe.assoc_all[g];
      int members = 0;
      for (int id : set.point_ids) members += scene.gt.point_plane[static_cast<std::size_t>(id)] == static_cast<int>(g);
      for (int id : set.line_ids) members += scene.gt.line_plane[static_cast<std::size_t>(id)] == static_cast<int>(g);
      int inliers = 0, correct = 0;
      Plane pl;
      if (assoc) {
        pl = assoc->plane;
        inliers = static_cast<int>(assoc->size());
        for (int id : assoc->point_ids) correct += scene.gt.point_plane[static_cast<std::size_t>(id)] == static_cast<int>(g);
        for (int id : assoc->line_ids) correct += scene.gt.line_plane[static_cast<std::size_t>(id)] == static_cast<int>(g);
      }
      const double precision = inliers > 0 ? static_cast<double>(correct) / inliers : 0.0;
      const double recall = members > 0 ? static_cast<double>(correct) / members : 0.0;
      os << sc.rng_seed << ',' << g << ',' << (assoc ? 1 : 0) << ',' << set.size() << ',' << inliers << ','
         << members << ',' << fmt("%.6f", precision) << ',' << fmt("%.6f", recall);
      for (double v : {pl.normal.x(), pl.normal.y(), pl.normal.z(), pl.offset}) os << ',' << fmt("%.9f", assoc ? v : 0.0);
      os << '\n';
      accepted_total += assoc ? 1 : 0;
      ++rows;
    }
  }
  ensure_dir(inv.out_dir);
  write_file(fs::path(inv.out_dir) / "ransac_report.csv", os.str());
  log << "ransac-demo: " << accepted_total << " of " << rows << " regions accepted a plane\n";
  return kExitOk;
}

int dispatch(const CliInvocation& inv, std::ostream& log, std::ostream& err) {
  try {
    if (inv.jobs < 1) throw Error(ErrorCode::kInvalidInput, "--jobs must be at least 1");
    if (inv.subcommand == "simulate") return cmd_simulate(inv, log, err);
    if (inv.subcommand == "bench") return cmd_bench(inv, log, err);
    if (inv.subcommand == "hessian") return cmd_hessian(inv, log, err);
    if (inv.subcommand == "ransac-demo") return cmd_ransac_demo(inv, log, err);
    throw Error(ErrorCode::kInvalidInput, "unknown subcommand '" + inv.subcommand + "'");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kConfigParse || e.code() == ErrorCode::kInvalidInput ? kExitUsage : kExitFailure;
  }
}

}  // namespace cpba

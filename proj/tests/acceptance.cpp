// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <map>
#include <string>

#include "cpba/simulator.hpp"
#include "jacobian_cases.hpp"
#include "ransac_cases.hpp"
#include "toy_problems.hpp"

using namespace cpba;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* spec, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, spec, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void accounting() {
  const auto t0 = std::chrono::steady_clock::now();
  const BenchConfig cfg = preset("sequence_b");
  const Scene scene = generate_scene(cfg.scene);
  const FrontEnd fe = run_front_end(scene, cfg.scene, cfg.ransac);
  const std::map<std::string, ItemCount> expected{{"P-wo", {100, 350}}, {"P-r", {101, 353}},  {"P-w", {51, 303}},
                                                  {"PL-wo", {120, 430}}, {"PL-r", {121, 433}}, {"PL-w", {51, 303}}};
  bool ok = true;
  std::string detail;
  for (const auto& v : accounting_variants()) {
    const BuiltProblem b = build_problem(scene, fe, v, cfg);
    const ItemCount ic = count_items_parameters(b.problem, b.initial);
    ok = ok && ic == expected.at(v.id);
    detail += v.id + " " + std::to_string(ic.items) + "/" + std::to_string(ic.parameters) + "  ";
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 1.0;
  report(1, "parameter accounting (sequence b)", ok, detail + fmt("(%.3f s)", elapsed));
}

const VariantSummary& find(const MonteCarloResult& r, const std::string& id) {
  for (const auto& s : r.summary) {
    if (s.variant == id) return s;
  }
  throw Error(ErrorCode::kInvalidInput, "missing variant " + id);
}

void monte_carlo_orderings() {
  const auto t0 = std::chrono::steady_clock::now();
  const BenchConfig cfg = preset("sequence_b");
  const MonteCarloResult r = run_monte_carlo(cfg, accounting_variants(), 30, cfg.scene.rng_seed);
  const double elapsed = seconds_since(t0);
  int failed = 0;
  for (const auto& s : r.summary) failed += s.runs_failed;

  const auto& pr = find(r, "P-r");
  const auto& pw = find(r, "P-w");
  const auto& pwo = find(r, "P-wo");
  const auto& plr = find(r, "PL-r");
  const auto& plw = find(r, "PL-w");
  const auto& plwo = find(r, "PL-wo");

  const bool time_ok = pw.median_time_s <= 0.9 * pr.median_time_s && plw.median_time_s <= 0.9 * plr.median_time_s &&
                       elapsed <= 300.0 && failed == 0;
  report(2, "efficiency ordering (30 paired runs)", time_ok,
         fmt("median time P-w %.4f s vs P-r %.4f s, PL-w %.4f s vs PL-r %.4f s", pw.median_time_s, pr.median_time_s,
             plw.median_time_s, plr.median_time_s) +
             fmt(" (improvement %.0f%% / %.0f%%)", 100.0 * (1.0 - pw.median_time_s / pr.median_time_s),
                 100.0 * (1.0 - plw.median_time_s / plr.median_time_s)) +
             " failed runs " + std::to_string(failed) + fmt(", wall %.1f s", elapsed));

  const bool a1 = plw.median_rmse_m <= plr.median_rmse_m;
  const bool a2 = plr.median_rmse_m <= 1.02 * plwo.median_rmse_m;
  const bool a3 = pw.median_rmse_m <= 1.02 * pwo.median_rmse_m;
  report(3, "accuracy ordering (30 paired runs)", a1 && a2 && a3 && failed == 0,
         fmt("median ATE PL-w %.4f, PL-r %.4f, PL-wo %.4f m", plw.median_rmse_m, plr.median_rmse_m,
             plwo.median_rmse_m) +
             fmt("; P-w %.4f, P-r %.4f, P-wo %.4f m", pw.median_rmse_m, pr.median_rmse_m, pwo.median_rmse_m) +
             "; PL-w<=PL-r " + (a1 ? "yes" : "no") + ", PL-r<=1.02 PL-wo " + (a2 ? "yes" : "no") +
             ", P-w<=1.02 P-wo " + (a3 ? "yes" : "no"));
}

void ground_truth_recovery() {
  BenchConfig cfg = preset("sequence_b");
  cfg.scene.pixel_noise_sigma = 0.0;
  cfg.scene.odom_sigma_theta_deg = 0.0;
  cfg.scene.odom_sigma_p = 0.0;
  cfg.solver.mode = SolverMode::kGaussNewton;
  cfg.solver.max_iterations = 10;
  const MonteCarloResult r = run_monte_carlo(cfg, accounting_variants(), 1, cfg.scene.rng_seed);
  bool ok = true;
  double worst_ate = 0.0, worst_cost = 0.0;
  int worst_iters = 0;
  for (const auto& run : r.runs) {
    ok = ok && run.ok && run.rmse_m < 1e-6 && run.final_cost < 1e-10 && run.iterations <= 10;
    worst_ate = std::max(worst_ate, run.rmse_m);
    worst_cost = std::max(worst_cost, run.final_cost);
    worst_iters = std::max(worst_iters, run.iterations);
  }
  report(4, "ground-truth recovery (zero noise, all variants)", ok,
         fmt("worst ATE %.2e m, worst cost %.2e, max iterations ", worst_ate, worst_cost) + std::to_string(worst_iters));
}

void jacobians() {
  int cases = 0, failures = 0;
  double worst_ratio = 0.0;
  std::string worst_name;
  std::uint64_t seed = 0;
  for (const auto& name : cpba::testing::jacobian_case_names()) {
    for (int k = 0; k < 200; ++k) {
      cpba::testing::CaseGenerator gen(++seed);
      const auto c = gen.make(name);
      const auto chk = cpba::testing::check_jacobians(c);
      ++cases;
      failures += chk.ok ? 0 : 1;
      if (chk.worst_ratio > worst_ratio) {
        worst_ratio = chk.worst_ratio;
        worst_name = name;
      }
    }
  }
  report(5, "Jacobian correctness", failures == 0,
         std::to_string(cases) + " cases over " + std::to_string(cpba::testing::jacobian_case_names().size()) +
             " edge/landmark kinds, " + std::to_string(failures) + " failures" +
             fmt(", worst error/tolerance %.3f", worst_ratio) + " (" + worst_name + ")");
}

void schur() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto t = cpba::testing::make_toy_problem(100 + s);
    const NormalEquations neq = build_normal_equations(t.problem, t.state);
    const Eigen::VectorXd dense = cpba::testing::dense_step(neq);
    const Eigen::VectorXd sc = schur_solve(neq);
    worst = std::max(worst, (sc - dense).norm() / std::max(dense.norm(), 1e-300));
  }
  report(6, "Schur equivalence (50 toy problems)", worst < 1e-8, fmt("worst relative difference %.2e", worst));
}

void ransac() {
  int accepted_correct = 0, exact = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto set = cpba::testing::make_contaminated_set(1000 + s, 80, 20);
    RansacConfig cfg;
    cfg.consensus_fraction = 0.8;
    cfg.rng_seed = s;
    const auto a = fit_plane_ransac(set.candidates, cfg);
    if (!a) continue;
    const auto sc = cpba::testing::score(*a, set);
    accepted_correct += sc.precision() >= 0.99 ? 1 : 0;
    exact += sc.correct == sc.truth && sc.reported == sc.truth ? 1 : 0;
  }
  int rejected = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto set = cpba::testing::make_contaminated_set(2000 + s, 50, 50);
    RansacConfig cfg;
    cfg.consensus_fraction = 0.8;
    cfg.rng_seed = s;
    rejected += fit_plane_ransac(set.candidates, cfg) ? 0 : 1;
  }
  report(7, "RANSAC robustness", accepted_correct >= 99 && rejected == 100,
         "20% outliers: " + std::to_string(accepted_correct) + "/100 accepted with precision >= 0.99 (" +
             std::to_string(exact) + " exact); 50% outliers: " + std::to_string(rejected) + "/100 rejected");
}

void sparsity() {
  const BenchConfig cfg = preset("sequence_b");
  const Scene scene = generate_scene(cfg.scene);
  const FrontEnd fe = run_front_end(scene, cfg.scene, cfg.ransac);
  const BuiltProblem wo = build_problem(scene, fe, VariantSpec::parse("PL-wo"), cfg);
  const BuiltProblem w = build_problem(scene, fe, VariantSpec::parse("PL-w"), cfg);
  const HessianPattern pwo = hessian_pattern(wo.problem, wo.initial);
  const HessianPattern pw = hessian_pattern(w.problem, w.initial);
  const bool ok = pw.total_dim() < pwo.total_dim() &&
                  pw.offdiagonal_scalar_nonzeros() < pwo.offdiagonal_scalar_nonzeros() && pw.total_dim() == 303 &&
                  pwo.total_dim() == 430;
  report(8, "Hessian sparsity (PL-w vs PL-wo)", ok,
         "dimension " + std::to_string(pw.total_dim()) + " vs " + std::to_string(pwo.total_dim()) +
             ", off-diagonal nonzeros " + std::to_string(pw.offdiagonal_scalar_nonzeros()) + " vs " +
             std::to_string(pwo.offdiagonal_scalar_nonzeros()));
}

}  // namespace

int main() {
  const auto run = [](void (*fn)(), int id, const char* name) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, name, false, std::string("exception: ") + e.what());
    }
  };
  run(accounting, 1, "parameter accounting (sequence b)");
  run(monte_carlo_orderings, 2, "efficiency and accuracy ordering");
  run(ground_truth_recovery, 4, "ground-truth recovery");
  run(jacobians, 5, "Jacobian correctness");
  run(schur, 6, "Schur equivalence");
  run(ransac, 7, "RANSAC robustness");
  run(sparsity, 8, "Hessian sparsity");
  std::printf("SKIP [9] absolute real-dataset RMSE and timing magnitudes: not assessed in simulation\n");
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cpba/scene_config.hpp"
#include "cpba/simulator.hpp"

namespace cpba {

enum class OutputFormat { kCsv, kJsonLines };

struct CliInvocation {
  std::string subcommand;   // simulate | bench | hessian | ransac-demo
  std::string config;       // YAML path or preset name; sequence_b when empty
  std::string out_dir = "out";
  std::vector<std::string> variants;  // empty: the five default variants
  std::optional<int> n_runs;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  OutputFormat format = OutputFormat::kCsv;
  bool include_accounting = false;
};

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Config from a file path, or a preset when `config` names one.
BenchConfig resolve_config(const CliInvocation& inv);

/// Requested variants in canonical order; PL-wo is added by
/// include_accounting. Throws kInvalidInput on unknown names.
std::vector<VariantSpec> resolve_variants(const CliInvocation& inv);

/// "# config=<name> hash=<hex> seed=<n>"
std::string provenance_line(const BenchConfig& cfg, std::uint64_t seed);

void write_runs_csv(std::ostream& os, const std::vector<RunReport>& runs);
void write_summary_csv(std::ostream& os, const std::vector<VariantSummary>& summary);
void write_runs_jsonl(std::ostream& os, const std::vector<RunReport>& runs);
void write_summary_jsonl(std::ostream& os, const std::vector<VariantSummary>& summary);

int cmd_simulate(const CliInvocation& inv, std::ostream& log, std::ostream& err);
int cmd_bench(const CliInvocation& inv, std::ostream& log, std::ostream& err);
int cmd_hessian(const CliInvocation& inv, std::ostream& log, std::ostream& err);
int cmd_ransac_demo(const CliInvocation& inv, std::ostream& log, std::ostream& err);

int dispatch(const CliInvocation& inv, std::ostream& log, std::ostream& err);

}  // namespace cpba

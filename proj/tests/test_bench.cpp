#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cpba/bench.hpp"

using namespace cpba;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cpba_test_bench_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

struct Csv {
  std::string provenance;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
};

Csv read_csv(const fs::path& p) {
  Csv c;
  std::istringstream is(slurp(p));
  std::string line;
  std::getline(is, c.provenance);
  std::getline(is, line);
  c.header = split(line, ',');
  while (std::getline(is, line)) {
    const auto cells = split(line, ',');
    EXPECT_EQ(cells.size(), c.header.size()) << line;
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cells.size() && i < c.header.size(); ++i) row[c.header[i]] = cells[i];
    c.rows.push_back(row);
  }
  return c;
}

CliInvocation bench_inv(const fs::path& out, int n_runs = 1, std::uint64_t seed = 7) {
  CliInvocation inv;
  inv.subcommand = "bench";
  inv.out_dir = out.string();
  inv.n_runs = n_runs;
  inv.seed = seed;
  return inv;
}

int run(const CliInvocation& inv, std::string* err_text = nullptr) {
  std::ostringstream log, err;
  const int code = dispatch(inv, log, err);
  if (err_text) *err_text = err.str();
  return code;
}

const std::vector<std::string> kRunsHeader{"variant", "seed",       "rmse_m",     "opt_time_s",
                                           "items",   "parameters", "iterations", "converged"};
const std::vector<std::string> kSummaryHeader{"variant", "runs_ok",    "runs_failed", "median_rmse_m",
                                              "median_opt_time_s", "items", "parameters", "median_iterations"};

}  // namespace

TEST(Variants, ResolveOrderAndDefaults) {
  CliInvocation inv;
  std::vector<std::string> ids;
  for (const auto& v : resolve_variants(inv)) ids.push_back(v.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"P-wo", "P-r", "P-w", "PL-r", "PL-w"}));
  inv.include_accounting = true;
  EXPECT_EQ(resolve_variants(inv).size(), 6u);
  inv.include_accounting = false;
  inv.variants = {"PL-w", "P-wo"};
  ids.clear();
  for (const auto& v : resolve_variants(inv)) ids.push_back(v.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"P-wo", "PL-w"}));
  inv.variants = {"PL-w", "bogus"};
  EXPECT_THROW(resolve_variants(inv), Error);
}

TEST(Config, ResolvePresetsAndFiles) {
  CliInvocation inv;
  EXPECT_EQ(resolve_config(inv).scene.name, "sequence_b");
  inv.config = "sequence_a";
  EXPECT_EQ(resolve_config(inv).scene.n_poses, 150);
  inv.config = std::string(CPBA_SOURCE_DIR) + "/configs/sequence_b.yaml";
  EXPECT_EQ(config_hash(resolve_config(inv)), config_hash(preset("sequence_b")));
  inv.config = "/nonexistent.yaml";
  EXPECT_THROW(resolve_config(inv), Error);
}

TEST(Provenance, LineFormat) {
  const BenchConfig c = preset("sequence_b");
  EXPECT_EQ(provenance_line(c, 7), "# config=sequence_b hash=" + config_hash(c) + " seed=7");
}

TEST(Bench, CsvSchemaAndRowCount) {
  const fs::path out = scratch("schema");
  ASSERT_EQ(run(bench_inv(out, 2, 3)), kExitOk);
  const Csv runs = read_csv(out / "runs.csv");
  const Csv summary = read_csv(out / "summary.csv");
  const std::string prov = provenance_line(preset("sequence_b"), 3);
  EXPECT_EQ(runs.provenance, prov);
  EXPECT_EQ(summary.provenance, prov);
  EXPECT_EQ(runs.header, kRunsHeader);
  EXPECT_EQ(summary.header, kSummaryHeader);
  ASSERT_EQ(runs.rows.size(), 10u);
  ASSERT_EQ(summary.rows.size(), 5u);
  std::map<std::string, std::vector<double>> rmse;
  for (const auto& r : runs.rows) {
    EXPECT_TRUE(r.at("seed") == "3" || r.at("seed") == "4");
    EXPECT_TRUE(r.at("converged") == "0" || r.at("converged") == "1");
    EXPECT_GT(std::stod(r.at("opt_time_s")), 0.0);
    EXPECT_EQ(r.at("opt_time_s").size() - r.at("opt_time_s").find('.') - 1, 6u);  // microseconds
    rmse[r.at("variant")].push_back(std::stod(r.at("rmse_m")));
  }
  for (const auto& s : summary.rows) {
    const auto& v = rmse.at(s.at("variant"));
    ASSERT_EQ(v.size(), 2u);
    EXPECT_NEAR(std::stod(s.at("median_rmse_m")), 0.5 * (v[0] + v[1]), 2e-9);
    EXPECT_EQ(s.at("runs_ok"), "2");
    EXPECT_EQ(s.at("runs_failed"), "0");
  }
  fs::remove_all(out);
}

TEST(Bench, AccountingColumnsMatchTable) {
  const fs::path out = scratch("accounting");
  CliInvocation inv = bench_inv(out);
  inv.include_accounting = true;
  ASSERT_EQ(run(inv), kExitOk);
  const std::map<std::string, std::pair<std::string, std::string>> expected{
      {"P-wo", {"100", "350"}}, {"P-r", {"101", "353"}},  {"P-w", {"51", "303"}},
      {"PL-wo", {"120", "430"}}, {"PL-r", {"121", "433"}}, {"PL-w", {"51", "303"}}};
  const Csv summary = read_csv(out / "summary.csv");
  ASSERT_EQ(summary.rows.size(), 6u);
  for (const auto& s : summary.rows) {
    EXPECT_EQ(s.at("items"), expected.at(s.at("variant")).first) << s.at("variant");
    EXPECT_EQ(s.at("parameters"), expected.at(s.at("variant")).second) << s.at("variant");
  }
  fs::remove_all(out);
}

TEST(Bench, DeterministicApartFromTiming) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run(bench_inv(a)), kExitOk);
  ASSERT_EQ(run(bench_inv(b)), kExitOk);
  const Csv ra = read_csv(a / "runs.csv"), rb = read_csv(b / "runs.csv");
  ASSERT_EQ(ra.rows.size(), rb.rows.size());
  EXPECT_EQ(ra.provenance, rb.provenance);
  for (std::size_t i = 0; i < ra.rows.size(); ++i) {
    auto x = ra.rows[i], y = rb.rows[i];
    x.erase("opt_time_s");
    y.erase("opt_time_s");
    EXPECT_EQ(x, y);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Bench, JsonLinesMirrorCsv) {
  const fs::path c = scratch("csv"), j = scratch("jsonl");
  ASSERT_EQ(run(bench_inv(c)), kExitOk);
  CliInvocation inv = bench_inv(j);
  inv.format = OutputFormat::kJsonLines;
  ASSERT_EQ(run(inv), kExitOk);
  EXPECT_FALSE(fs::exists(j / "runs.csv"));
  const Csv csv = read_csv(c / "runs.csv");
  std::istringstream is(slurp(j / "runs.jsonl"));
  std::string line;
  std::getline(is, line);
  const auto prov = nlohmann::json::parse(line).at("provenance");
  EXPECT_EQ(prov.at("config"), "sequence_b");
  EXPECT_EQ(prov.at("hash"), config_hash(preset("sequence_b")));
  EXPECT_EQ(prov.at("seed"), 7);
  std::size_t n = 0;
  while (std::getline(is, line)) {
    const auto obj = nlohmann::ordered_json::parse(line);
    ASSERT_LT(n, csv.rows.size());
    const auto& row = csv.rows[n++];
    std::vector<std::string> keys;
    for (const auto& [k, v] : obj.items()) keys.push_back(k);
    EXPECT_EQ(keys, kRunsHeader);
    EXPECT_EQ(obj.at("variant"), row.at("variant"));
    EXPECT_NEAR(obj.at("rmse_m").get<double>(), std::stod(row.at("rmse_m")), 1e-9);
    EXPECT_EQ(obj.at("items").get<int>(), std::stoi(row.at("items")));
  }
  EXPECT_EQ(n, csv.rows.size());
  std::istringstream ss(slurp(j / "summary.jsonl"));
  int summary_lines = 0;
  while (std::getline(ss, line)) ++summary_lines;
  EXPECT_EQ(summary_lines, 6);  // provenance + five variants
  fs::remove_all(c);
  fs::remove_all(j);
}

TEST(Bench, BadInputsExitTwoWithoutFiles) {
  const fs::path bad_cfg = scratch("bad.yaml");
  {
    std::ofstream(bad_cfg) << "scene:\n  n_poses: [\n";
  }
  const fs::path out = scratch("bad_out");
  for (const std::string sub : {"bench", "hessian", "ransac-demo", "simulate"}) {
    CliInvocation inv = bench_inv(out);
    inv.subcommand = sub;
    inv.config = bad_cfg.string();
    std::string err;
    EXPECT_EQ(run(inv, &err), kExitUsage) << sub;
    EXPECT_NE(err.find("error"), std::string::npos);
    EXPECT_FALSE(fs::exists(out)) << sub;
  }
  for (const std::string sub : {"bench", "hessian"}) {
    CliInvocation inv = bench_inv(out);
    inv.subcommand = sub;
    inv.variants = {"PL-w", "PL-q"};
    EXPECT_EQ(run(inv), kExitUsage) << sub;
    EXPECT_FALSE(fs::exists(out)) << sub;
  }
  CliInvocation inv = bench_inv(out);
  inv.n_runs = 0;
  EXPECT_EQ(run(inv), kExitUsage);
  inv = bench_inv(out);
  inv.subcommand = "plot";
  EXPECT_EQ(run(inv), kExitUsage);
  EXPECT_FALSE(fs::exists(out));
  fs::remove(bad_cfg);
}

TEST(Hessian, PatternFilesPerVariant) {
  const fs::path out = scratch("hessian");
  CliInvocation inv = bench_inv(out);
  inv.subcommand = "hessian";
  inv.include_accounting = true;
  ASSERT_EQ(run(inv), kExitOk);
  std::map<std::string, PatternFileSummary> s;
  for (const std::string v : {"P-wo", "P-r", "P-w", "PL-wo", "PL-r", "PL-w"}) {
    const fs::path f = out / ("hessian_" + v + ".txt");
    ASSERT_TRUE(fs::exists(f)) << v;
    std::ifstream in(f);
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, provenance_line(preset("sequence_b"), 7) + " variant=" + v);
    std::ifstream again(f);
    s[v] = read_hessian_pattern_summary(again);
  }
  EXPECT_EQ(s["PL-wo"].rows, 430);
  EXPECT_EQ(s["PL-w"].rows, 303);
  EXPECT_LT(s["PL-w"].entries, s["PL-wo"].entries);
  EXPECT_LT(s["PL-w"].offdiagonal_entries, s["PL-wo"].offdiagonal_entries);
  EXPECT_EQ(s["P-wo"].rows, 350);
  EXPECT_EQ(s["P-r"].rows, 353);

  // Independent parse of the file format: header then unique, in-range,
  // symmetric "row col" pairs.
  std::ifstream in(out / "hessian_PL-w.txt");
  std::string line;
  int rows = -1, cols = -1;
  std::set<std::pair<int, int>> entries;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int a = 0, b = 0;
    ls >> a >> b;
    if (rows < 0) {
      rows = a;
      cols = b;
      continue;
    }
    ASSERT_TRUE(a >= 0 && a < rows && b >= 0 && b < cols);
    EXPECT_TRUE(entries.emplace(a, b).second);
  }
  EXPECT_EQ(static_cast<long long>(entries.size()), s["PL-w"].entries);
  for (const auto& [a, b] : entries) EXPECT_TRUE(entries.count({b, a}));
  for (int i = 0; i < rows; ++i) EXPECT_TRUE(entries.count({i, i}));
  fs::remove_all(out);
}

TEST(Hessian, DefaultEmitsFiveVariants) {
  const fs::path out = scratch("hessian5");
  CliInvocation inv = bench_inv(out);
  inv.subcommand = "hessian";
  ASSERT_EQ(run(inv), kExitOk);
  int files = 0;
  for (const auto& e : fs::directory_iterator(out)) files += e.path().filename().string().rfind("hessian_", 0) == 0;
  EXPECT_EQ(files, 5);
  EXPECT_FALSE(fs::exists(out / "hessian_PL-wo.txt"));
  fs::remove_all(out);
}

TEST(RansacDemo, CleanScenesArePerfect) {
  const fs::path out = scratch("ransac");
  CliInvocation inv = bench_inv(out, 3, 1);
  inv.subcommand = "ransac-demo";
  ASSERT_EQ(run(inv), kExitOk);
  const Csv c = read_csv(out / "ransac_report.csv");
  EXPECT_EQ(c.header, (std::vector<std::string>{"seed", "region", "accepted", "candidates", "inliers", "true_members",
                                                "precision", "recall", "nx", "ny", "nz", "d"}));
  ASSERT_EQ(c.rows.size(), 3u);
  for (const auto& r : c.rows) {
    EXPECT_EQ(r.at("accepted"), "1");
    EXPECT_DOUBLE_EQ(std::stod(r.at("precision")), 1.0);
    EXPECT_DOUBLE_EQ(std::stod(r.at("recall")), 1.0);
    EXPECT_NEAR(std::abs(std::stod(r.at("ny"))), 1.0, 1e-3);
  }
  fs::remove_all(out);
}

TEST(RansacDemo, HeavyContaminationIsRejected) {
  const fs::path dir = scratch("ransac50");
  fs::create_directories(dir);
  std::ofstream(dir / "c.yaml") << "scene:\n  outlier_fraction: 0.5\n";
  CliInvocation inv = bench_inv(dir / "out", 5, 1);
  inv.subcommand = "ransac-demo";
  inv.config = (dir / "c.yaml").string();
  ASSERT_EQ(run(inv), kExitOk);
  const Csv c = read_csv(dir / "out" / "ransac_report.csv");
  ASSERT_EQ(c.rows.size(), 5u);
  for (const auto& r : c.rows) EXPECT_EQ(r.at("accepted"), "0");
  fs::remove_all(dir);
}

TEST(Simulate, WritesGroundTruth) {
  const fs::path out = scratch("simulate");
  CliInvocation inv = bench_inv(out);
  inv.subcommand = "simulate";
  ASSERT_EQ(run(inv), kExitOk);
  const Csv t = read_csv(out / "trajectory.csv");
  const Csv l = read_csv(out / "landmarks.csv");
  EXPECT_EQ(t.rows.size(), 50u);
  EXPECT_EQ(l.rows.size(), 70u);
  EXPECT_EQ(t.provenance, provenance_line(preset("sequence_b"), 7));
  fs::remove_all(out);
}

TEST(Executable, ExitCodes) {
  const fs::path out = scratch("exe");
  const std::string exe = CPBA_BENCH_EXE;
  auto sh = [](const std::string& cmd) {
    const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(sh(exe + " bench --n-runs 1 --seed 7 --variants P-w,PL-w --out " + out.string()), 0);
  const Csv runs = read_csv(out / "runs.csv");
  EXPECT_EQ(runs.rows.size(), 2u);
  EXPECT_EQ(runs.provenance, provenance_line(preset("sequence_b"), 7));
  EXPECT_EQ(sh(exe + " bench --variants PL-z --out " + out.string() + "_x"), 2);
  EXPECT_FALSE(fs::exists(out.string() + "_x"));
  EXPECT_EQ(sh(exe + " bench --format xml --out " + out.string() + "_x"), 2);
  EXPECT_EQ(sh(exe + " bench --config /nonexistent.yaml --out " + out.string() + "_x"), 2);
  EXPECT_EQ(sh(exe), 2);
  EXPECT_EQ(sh(exe + " --help"), 0);
  EXPECT_FALSE(fs::exists(out.string() + "_x"));
  fs::remove_all(out);
}

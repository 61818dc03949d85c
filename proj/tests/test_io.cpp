#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fleet/datagen.hpp"
#include "fleet/io.hpp"
#include "fleet/solver.hpp"

using namespace fleet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fleet_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

GenConfig small_config(std::uint64_t seed = 1) {
  GenConfig c;
  c.n_systems = 4;
  c.observations = 10;
  c.dim = 2;
  c.noise_variance = 0.3;
  c.nominal_mean = Vec::Ones(2);
  c.nominal_cov = 0.02 * Mat::Identity(2, 2);
  c.anomal_mean = 4.0 * Vec::Ones(2);
  c.anomal_cov = 0.02 * Mat::Identity(2, 2);
  c.regressor_mean = Vec::Zero(2);
  c.regressor_cov = Mat::Identity(2, 2);
  c.anomaly_indices = {3};
  c.seed = seed;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("fleet file round-trips bit exactly") {
  TempDir tmp;
  auto cfg = small_config();
  auto fleet = generate_fleet(cfg);
  auto path = tmp.file("fleet.bin");
  write_fleet(fleet, path, &cfg);
  auto back = read_fleet(path);
  REQUIRE(back.size() == fleet.size());
  for (int i = 0; i < fleet.size(); ++i) {
    CHECK(back.systems[i].regressors == fleet.systems[i].regressors);
    CHECK(back.systems[i].measurements == fleet.systems[i].measurements);
  }
  REQUIRE(back.truth.has_value());
  CHECK(back.truth->anomalies == fleet.truth->anomalies);
  CHECK(back.truth->noise_variance == fleet.truth->noise_variance);
  REQUIRE(back.truth->true_params.size() == fleet.truth->true_params.size());
  for (std::size_t i = 0; i < back.truth->true_params.size(); ++i)
    CHECK(back.truth->true_params[i] == fleet.truth->true_params[i]);
}

TEST_CASE("fleet file writes are byte deterministic") {
  TempDir tmp;
  auto cfg = small_config(7);
  auto fleet = generate_fleet(cfg);
  write_fleet(fleet, tmp.file("a.bin"), &cfg);
  write_fleet(fleet, tmp.file("b.bin"), &cfg);
  CHECK(slurp(tmp.file("a.bin")) == slurp(tmp.file("b.bin")));
}

TEST_CASE("corrupt fleet files are rejected") {
  TempDir tmp;
  {
    std::ofstream os(tmp.file("junk.bin"), std::ios::binary);
    os << "not a fleet";
  }
  CHECK_THROWS(read_fleet(tmp.file("junk.bin")));
  CHECK_THROWS(read_fleet(tmp.file("missing.bin")));
}

TEST_CASE("gen config JSON round trip and hashing") {
  auto cfg = small_config(11);
  auto j = gen_config_to_json(cfg);
  auto back = gen_config_from_json(j);
  CHECK(back.n_systems == cfg.n_systems);
  CHECK(back.observations == cfg.observations);
  CHECK(back.dim == cfg.dim);
  CHECK(back.noise_variance == cfg.noise_variance);
  CHECK(back.nominal_mean == cfg.nominal_mean);
  CHECK(back.nominal_cov == cfg.nominal_cov);
  CHECK(back.regressor_cov == cfg.regressor_cov);
  CHECK(back.anomaly_indices == cfg.anomaly_indices);
  CHECK(back.seed == cfg.seed);

  CHECK(config_hash(cfg) == config_hash(back));
  auto other = cfg;
  other.seed += 1;
  CHECK(config_hash(cfg) != config_hash(other));
  CHECK(config_hash(cfg).size() == 16);  // hex-encoded 64-bit value
}

TEST_CASE("load_gen_config reads a file") {
  TempDir tmp;
  auto cfg = small_config(13);
  {
    std::ofstream os(tmp.file("cfg.json"));
    os << gen_config_to_json(cfg).dump(2);
  }
  auto back = load_gen_config(tmp.file("cfg.json"));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK_THROWS(load_gen_config(tmp.file("absent.json")));
}

TEST_CASE("solution report fields and determinism") {
  TempDir tmp;
  auto fleet = generate_fleet(small_config(17));
  SolverConfig scfg;
  scfg.lambda = 0.5 * compute_lambda_max(fleet, 2);
  auto sol = solve_group_lasso(fleet, scfg);

  auto j = solution_to_json(sol);
  for (const char* key : {"nominal", "per_system", "deviations", "flagged", "objective",
                          "support_threshold", "p", "diagnostics"})
    CHECK(j.contains(key));
  CHECK(j["diagnostics"].contains("method"));
  CHECK(j["diagnostics"].contains("iterations"));
  CHECK(j["diagnostics"].contains("converged"));
  CHECK(j["diagnostics"].contains("kkt_residual"));
  CHECK(j["per_system"].size() == 4);

  write_solution_report(sol, tmp.file("r1.json"));
  write_solution_report(sol, tmp.file("r2.json"));
  CHECK(slurp(tmp.file("r1.json")) == slurp(tmp.file("r2.json")));

  // report parses back and the flagged set survives
  auto parsed = Json::parse(slurp(tmp.file("r1.json")));
  CHECK(parsed["flagged"].get<std::vector<int>>() == sol.flagged);
}

TEST_CASE("deviation CSV") {
  TempDir tmp;
  auto fleet = generate_fleet(small_config(19));
  SolverConfig scfg;
  scfg.lambda = 0.0;
  auto sol = solve_group_lasso(fleet, scfg);
  write_deviation_csv(sol, tmp.file("dev.csv"));
  auto text = slurp(tmp.file("dev.csv"));
  CHECK(text.rfind("system,deviation\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);  // header + 4 rows
}

TEST_CASE("per-system CSV export") {
  TempDir tmp;
  auto fleet = generate_fleet(small_config(23));
  auto dir = tmp.file("csvs");
  fs::create_directories(dir);
  export_fleet_csv(fleet, dir);
  for (int i = 1; i <= 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "system_%03d.csv", i);
    auto text = slurp((fs::path(dir) / name).string());
    CHECK(text.rfind("y,phi_1,phi_2\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 11);  // header + 10 rows
  }
}

TEST_CASE("SVG deviation chart is written") {
  TempDir tmp;
  auto fleet = generate_fleet(small_config(29));
  SolverConfig scfg;
  scfg.lambda = 0.5 * compute_lambda_max(fleet, 2);
  auto sol = solve_group_lasso(fleet, scfg);
  write_deviation_svg(sol, "deviations", tmp.file("dev.svg"));
  auto text = slurp(tmp.file("dev.svg"));
  CHECK(text.find("<svg") != std::string::npos);
  CHECK(text.find("deviations") != std::string::npos);
  CHECK(text.find("rect") != std::string::npos);
}

TEST_CASE("admm trace CSV format") {
  TempDir tmp;
  std::vector<AdmmTraceRow> trace = {{1, 0.5, 0.25, 1.0, 10.0, {}},
                                     {2, 0.1, 0.05, 2.0, 9.0, {1, 2}}};
  write_admm_trace_csv(trace, tmp.file("trace.csv"));
  auto text = slurp(tmp.file("trace.csv"));
  CHECK(text.rfind("iteration,primal_residual,dual_residual,rho,objective\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

// Batch front end: generate synthetic fleets, run any of the detectors,
// tune lambda and compare methods. Exit codes: 0 ok, 2 usage/config error,
// 3 non-convergence, 4 enumeration-cap refusal.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <nlohmann/json.hpp>

#include "fleet/admm.hpp"
#include "fleet/baseline.hpp"
#include "fleet/core.hpp"
#include "fleet/datagen.hpp"
#include "fleet/errors.hpp"
#include "fleet/io.hpp"
#include "fleet/oracle.hpp"
#include "fleet/solver.hpp"
#include "fleet/transport.hpp"
#include "fleet/tuning.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNonConvergence = 3;
constexpr int kExitRefused = 4;

int run_gen(const std::string& config_path, bool paper_defaults, std::uint64_t seed,
            const std::string& out, const std::string& csv_dir) {
  fleet::GenConfig config =
      paper_defaults ? fleet::default_paper_config() : fleet::load_gen_config(config_path);
  config.seed = seed;
  auto data = fleet::generate_fleet(config);
  fleet::write_fleet(data, out, &config);
  if (!csv_dir.empty()) fleet::export_fleet_csv(data, csv_dir);
  std::cout << "wrote " << out << "\n";
  std::cout << "config_hash " << fleet::config_hash(config) << "\n";
  std::cout << "systems " << data.size() << " dim " << data.dim() << "\n";
  if (data.truth) {
    std::cout << "true_anomalies";
    for (int tag : data.truth->anomalies) std::cout << " " << tag;
    std::cout << "\n";
  }
  return kExitOk;
}

void write_outputs(const fleet::Solution& sol, const std::string& report, const std::string& csv) {
  if (!report.empty()) fleet::write_solution_report(sol, report);
  if (!csv.empty()) fleet::write_deviation_csv(sol, csv);
  std::cout << "flagged";
  for (int tag : sol.flagged) std::cout << " " << tag;
  std::cout << "\nobjective " << sol.objective << "\niterations " << sol.diagnostics.iterations
            << "\n";
}

int run_detect(const std::string& dataset, const std::string& method, double lambda, int k,
               bool lambda_set, bool k_set, int p, double rho, const std::string& transport_name,
               int threads, double tik_threshold, const std::string& report,
               const std::string& csv, const std::string& trace_path) {
  auto data = fleet::read_fleet(dataset);
  fleet::SolverConfig cfg;
  cfg.p = p;
  cfg.threads = threads;

  if (method == "central") {
    fleet::Solution sol;
    if (k_set) {
      auto tuned = fleet::tune_lambda_for_k(data, k, cfg);
      std::cout << "tuned_lambda " << tuned.lambda << " achieved_k " << tuned.achieved_k << "\n";
      sol = std::move(tuned.solution);
    } else {
      cfg.lambda = lambda;
      sol = fleet::solve_group_lasso(data, cfg);
    }
    write_outputs(sol, report, csv);
    return kExitOk;
  }
  if (method == "admm") {
    if (!lambda_set) throw CLI::ValidationError("--lambda is required for --method admm");
    fleet::AdmmConfig acfg;
    acfg.rho = rho;
    acfg.threads = threads;
    auto transport = transport_name == "socket" ? fleet::make_socket_transport()
                                                : fleet::make_inprocess_bus();
    std::vector<fleet::AdmmTraceRow> trace;
    auto sol = fleet::run_distributed(data, lambda, p, acfg, *transport, &trace);
    if (!trace_path.empty()) fleet::write_admm_trace_csv(trace, trace_path);
    write_outputs(sol, report, csv);
    return kExitOk;
  }
  if (method == "oracle") {
    if (!k_set) throw CLI::ValidationError("--k is required for --method oracle");
    auto result = fleet::brute_force_detect(data, k);
    nlohmann::json j;
    j["method"] = "oracle";
    j["k"] = k;
    j["best"] = {{"anomaly_set", result.best.hypothesis.anomaly_set}, {"cost", result.best.cost}};
    nlohmann::json nominal = nlohmann::json::array();
    for (Eigen::Index q = 0; q < result.best.nominal.size(); ++q)
      nominal.push_back(result.best.nominal[q]);
    j["best"]["nominal"] = std::move(nominal);
    nlohmann::json anomal = nlohmann::json::object();
    for (const auto& [tag, theta] : result.best.anomal_params) {
      nlohmann::json v = nlohmann::json::array();
      for (Eigen::Index q = 0; q < theta.size(); ++q) v.push_back(theta[q]);
      anomal[std::to_string(tag)] = std::move(v);
    }
    j["best"]["anomal_params"] = std::move(anomal);
    nlohmann::json ranking = nlohmann::json::array();
    std::size_t limit = std::min<std::size_t>(result.ranking.size(), 100);
    for (std::size_t r = 0; r < limit; ++r)
      ranking.push_back({{"cost", result.ranking[r].first},
                         {"anomaly_set", result.ranking[r].second.anomaly_set}});
    j["ranking"] = std::move(ranking);
    if (!report.empty()) {
      std::ofstream os(report);
      os << j.dump(2) << "\n";
    }
    std::cout << "best";
    for (int tag : result.best.hypothesis.anomaly_set) std::cout << " " << tag;
    std::cout << "\ncost " << result.best.cost << "\n";
    return kExitOk;
  }
  if (method == "tikhonov") {
    if (!lambda_set) throw CLI::ValidationError("--lambda is required for --method tikhonov");
    auto sol = fleet::solve_tikhonov(data, lambda, tik_threshold);
    auto rep = fleet::threshold_report(sol, tik_threshold);
    std::cout << "margin_ratio " << rep.margin_ratio << "\n";
    write_outputs(sol, report, csv);
    return kExitOk;
  }
  throw CLI::ValidationError("unknown method: " + method);
}

int run_compare(const std::string& dataset, std::vector<double> lambdas, double gl_lambda,
                int gl_k, bool gl_lambda_set, const std::string& out_dir, bool svg, int p,
                int threads) {
  if (lambdas.empty()) throw CLI::ValidationError("--lambdas must be nonempty");
  auto data = fleet::read_fleet(dataset);
  std::filesystem::create_directories(out_dir);

  nlohmann::json summary;
  int failures = 0;

  fleet::SolverConfig cfg;
  cfg.p = p;
  cfg.threads = threads;
  try {
    fleet::Solution gl;
    if (gl_lambda_set) {
      cfg.lambda = gl_lambda;
      gl = fleet::solve_group_lasso(data, cfg);
    } else {
      auto tuned = fleet::tune_lambda_for_k(data, gl_k, cfg);
      gl = std::move(tuned.solution);
      summary["group_lasso"]["tuned_lambda"] = tuned.lambda;
    }
    fleet::write_deviation_csv(gl, out_dir + "/group_lasso_deviations.csv");
    if (svg) fleet::write_deviation_svg(gl, "group lasso deviations", out_dir + "/group_lasso.svg");
    auto rep = fleet::threshold_report(gl, gl.support_threshold);
    summary["group_lasso"]["flagged"] = gl.flagged;
    summary["group_lasso"]["nonzero_deviations"] = rep.flagged.size();
    summary["group_lasso"]["margin_ratio"] = rep.margin_ratio;
  } catch (const std::exception& e) {
    summary["group_lasso"]["error"] = e.what();
    ++failures;
  }

  for (double lambda : lambdas) {
    nlohmann::json entry;
    entry["lambda"] = lambda;
    try {
      auto sol = fleet::solve_tikhonov(data, lambda);
      std::ostringstream name;
      name << out_dir << "/tikhonov_lambda_" << lambda << "_deviations.csv";
      fleet::write_deviation_csv(sol, name.str());
      if (svg) {
        std::ostringstream sname;
        sname << out_dir << "/tikhonov_lambda_" << lambda << ".svg";
        fleet::write_deviation_svg(sol, "tikhonov deviations", sname.str());
      }
      auto rep = fleet::threshold_report(sol, sol.support_threshold);
      entry["nonzero_deviations"] = rep.flagged.size();
      entry["margin_ratio"] = rep.margin_ratio;
      entry["min_deviation"] = *std::min_element(sol.deviations.begin(), sol.deviations.end());
    } catch (const std::exception& e) {
      entry["error"] = e.what();
      ++failures;
    }
    summary["tikhonov"].push_back(std::move(entry));
  }

  std::ofstream os(out_dir + "/summary.json");
  os << summary.dump(2) << "\n";
  std::cout << "wrote " << out_dir << "/summary.json\n";
  return failures == static_cast<int>(lambdas.size()) + 1 ? 1 : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anomaly detection in homogenous populations"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic fleet");
  std::string gen_config, gen_out = "fleet.bin", gen_csv_dir;
  bool paper_defaults = false;
  std::uint64_t seed = 1;
  gen->add_option("--config", gen_config, "GenConfig JSON file");
  gen->add_flag("--paper-defaults", paper_defaults, "use the built-in experiment constants");
  gen->add_option("--seed", seed, "RNG seed");
  gen->add_option("--out", gen_out, "output fleet file");
  gen->add_option("--csv-dir", gen_csv_dir, "also export per-system CSVs here");

  // detect
  auto* detect = app.add_subcommand("detect", "run a detector on a fleet file");
  std::string dataset, method = "central", report_path, csv_path, trace_path,
              transport_name = "bus";
  double lambda = 0.0, rho = 1.0, tik_threshold = 1e-8;
  int k = 0, p = 2, threads = 0;
  detect->add_option("dataset", dataset, "fleet file")->required();
  detect->add_option("--method", method, "central|admm|oracle|tikhonov");
  auto* lambda_opt = detect->add_option("--lambda", lambda, "regularization weight");
  auto* k_opt = detect->add_option("--k", k, "anomaly count (oracle / tuning)");
  detect->add_option("--p", p, "norm selector (1 or 2)");
  detect->add_option("--rho", rho, "initial ADMM penalty");
  detect->add_option("--transport", transport_name, "admm transport: bus|socket");
  detect->add_option("--threads", threads, "worker threads (0 = auto)");
  detect->add_option("--threshold", tik_threshold, "tikhonov flagging threshold");
  detect->add_option("--out-report", report_path, "JSON report path");
  detect->add_option("--out-csv", csv_path, "deviation CSV path");
  detect->add_option("--out-trace", trace_path, "ADMM trace CSV path");

  // compare
  auto* compare = app.add_subcommand("compare", "group lasso vs tikhonov side by side");
  std::string cmp_dataset, out_dir = "compare_out";
  std::vector<double> lambdas;
  double gl_lambda = 0.0;
  int gl_k = 3, cmp_p = 2, cmp_threads = 0;
  bool svg = false;
  compare->add_option("dataset", cmp_dataset, "fleet file")->required();
  compare->add_option("--lambdas", lambdas, "tikhonov lambda list");
  auto* gl_lambda_opt = compare->add_option("--gl-lambda", gl_lambda, "group lasso lambda");
  compare->add_option("--gl-k", gl_k, "tune group lasso lambda for this k");
  compare->add_option("--out-dir", out_dir, "output directory");
  compare->add_flag("--svg", svg, "emit SVG bar charts");
  compare->add_option("--p", cmp_p, "norm selector");
  compare->add_option("--threads", cmp_threads, "worker threads");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) {
      if (!paper_defaults && gen_config.empty())
        throw CLI::ValidationError("gen needs --config or --paper-defaults");
      return run_gen(gen_config, paper_defaults, seed, gen_out, gen_csv_dir);
    }
    if (detect->parsed())
      return run_detect(dataset, method, lambda, k, !lambda_opt->empty(), !k_opt->empty(), p, rho,
                        transport_name, threads, tik_threshold, report_path, csv_path, trace_path);
    if (compare->parsed())
      return run_compare(cmp_dataset, lambdas, gl_lambda, gl_k, !gl_lambda_opt->empty(), out_dir,
                         svg, cmp_p, cmp_threads);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const fleet::EnumerationCapError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return kExitRefused;
  } catch (const fleet::NonConvergenceError& e) {
    std::cerr << "did not converge: " << e.what() << "\n";
    return kExitNonConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

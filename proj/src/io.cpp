#include "fleet/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace fleet {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'T', 'D', '0', '0', '0', '1'};

Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json mat_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Vec vec_from_json(const Json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

Mat mat_from_json(const Json& j) {
  if (j.empty()) return Mat();
  Mat m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r)
    for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

void write_doubles(std::ostream& os, const double* data, std::size_t count) {
  static_assert(sizeof(double) == 8);
  // assumes little-endian host (x86/aarch64); asserted at read time via magic
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

void read_doubles(std::istream& is, double* data, std::size_t count) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
  if (!is) throw std::runtime_error("fleet file: truncated data block");
}

}  // namespace

std::string config_hash(const GenConfig& config) {
  std::string dump = gen_config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Json gen_config_to_json(const GenConfig& c) {
  return Json{{"n_systems", c.n_systems},
              {"observations", c.observations},
              {"dim", c.dim},
              {"noise_variance", c.noise_variance},
              {"nominal_mean", vec_to_json(c.nominal_mean)},
              {"nominal_cov", mat_to_json(c.nominal_cov)},
              {"anomal_mean", vec_to_json(c.anomal_mean)},
              {"anomal_cov", mat_to_json(c.anomal_cov)},
              {"regressor_mean", vec_to_json(c.regressor_mean)},
              {"regressor_cov", mat_to_json(c.regressor_cov)},
              {"anomaly_indices", c.anomaly_indices},
              {"seed", c.seed}};
}

GenConfig gen_config_from_json(const Json& j) {
  GenConfig c;
  c.n_systems = j.at("n_systems").get<int>();
  c.observations = j.at("observations").get<int>();
  c.dim = j.at("dim").get<int>();
  c.noise_variance = j.at("noise_variance").get<double>();
  c.nominal_mean = vec_from_json(j.at("nominal_mean"));
  c.nominal_cov = mat_from_json(j.at("nominal_cov"));
  c.anomal_mean = vec_from_json(j.at("anomal_mean"));
  c.anomal_cov = mat_from_json(j.at("anomal_cov"));
  c.regressor_mean = vec_from_json(j.at("regressor_mean"));
  c.regressor_cov = mat_from_json(j.at("regressor_cov"));
  c.anomaly_indices = j.value("anomaly_indices", std::vector<int>{});
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

GenConfig load_gen_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  Json j = Json::parse(is);
  return gen_config_from_json(j);
}

void write_fleet(const FleetDataset& fleet, const std::string& path, const GenConfig* config) {
  fleet.validate();
  Json header;
  header["n_systems"] = fleet.size();
  header["dim"] = fleet.dim();
  std::vector<int> omegas;
  for (const auto& s : fleet.systems) omegas.push_back(s.omega());
  header["omegas"] = omegas;
  if (config) {
    header["seed"] = config->seed;
    header["config_hash"] = config_hash(*config);
  }
  if (fleet.truth) {
    Json truth;
    truth["anomalies"] = fleet.truth->anomalies;
    truth["noise_variance"] = fleet.truth->noise_variance;
    Json params = Json::array();
    for (const auto& p : fleet.truth->true_params) params.push_back(vec_to_json(p));
    truth["true_params"] = std::move(params);
    header["truth"] = std::move(truth);
  }
  std::string head = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, 8);
  std::uint64_t len = head.size();
  os.write(reinterpret_cast<const char*>(&len), 8);
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& s : fleet.systems) {
    // row-major regressors
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = s.regressors;
    write_doubles(os, rm.data(), static_cast<std::size_t>(rm.size()));
    write_doubles(os, s.measurements.data(), static_cast<std::size_t>(s.measurements.size()));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

FleetDataset read_fleet(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open fleet file: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a fleet file: " + path);
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 8);
  std::string head(len, '\0');
  is.read(head.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("fleet file: truncated header");
  Json header = Json::parse(head);

  FleetDataset fleet;
  const int n = header.at("n_systems").get<int>();
  const int m = header.at("dim").get<int>();
  auto omegas = header.at("omegas").get<std::vector<int>>();
  if (static_cast<int>(omegas.size()) != n) throw std::runtime_error("fleet file: bad omega list");
  for (int i = 0; i < n; ++i) {
    SystemDataset s;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(omegas[i], m);
    read_doubles(is, rm.data(), static_cast<std::size_t>(rm.size()));
    s.regressors = rm;
    s.measurements = Vec(omegas[i]);
    read_doubles(is, s.measurements.data(), static_cast<std::size_t>(omegas[i]));
    fleet.systems.push_back(std::move(s));
  }
  if (header.contains("truth")) {
    TruthRecord truth;
    const auto& t = header["truth"];
    truth.anomalies = t.value("anomalies", std::vector<int>{});
    truth.noise_variance = t.value("noise_variance", 0.0);
    if (t.contains("true_params"))
      for (const auto& p : t["true_params"]) truth.true_params.push_back(vec_from_json(p));
    fleet.truth = std::move(truth);
  }
  fleet.validate();
  return fleet;
}

void export_fleet_csv(const FleetDataset& fleet, const std::string& directory) {
  std::filesystem::create_directories(directory);
  for (int i = 0; i < fleet.size(); ++i) {
    std::ostringstream name;
    name << directory << "/system_" << std::setw(3) << std::setfill('0') << (i + 1) << ".csv";
    std::ofstream os(name.str());
    os << "y";
    for (int q = 1; q <= fleet.dim(); ++q) os << ",phi_" << q;
    os << "\n";
    os << std::setprecision(17);
    const auto& s = fleet.systems[i];
    for (int t = 0; t < s.omega(); ++t) {
      os << s.measurements[t];
      for (int q = 0; q < fleet.dim(); ++q) os << "," << s.regressors(t, q);
      os << "\n";
    }
  }
}

Json solution_to_json(const Solution& sol) {
  Json j;
  j["nominal"] = vec_to_json(sol.nominal);
  Json per = Json::array();
  for (const auto& v : sol.per_system) per.push_back(vec_to_json(v));
  j["per_system"] = std::move(per);
  j["deviations"] = sol.deviations;
  j["flagged"] = sol.flagged;
  j["objective"] = sol.objective;
  j["support_threshold"] = sol.support_threshold;
  j["p"] = sol.p;
  Json d;
  d["method"] = sol.diagnostics.method;
  d["iterations"] = sol.diagnostics.iterations;
  d["converged"] = sol.diagnostics.converged;
  d["kkt_residual"] = sol.diagnostics.kkt_residual;
  if (!sol.diagnostics.primal_residuals.empty()) {
    d["primal_residuals"] = sol.diagnostics.primal_residuals;
    d["dual_residuals"] = sol.diagnostics.dual_residuals;
    d["rho_trace"] = sol.diagnostics.rho_trace;
  }
  j["diagnostics"] = std::move(d);
  return j;
}

void write_solution_report(const Solution& sol, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << solution_to_json(sol).dump(2) << "\n";
}

void write_deviation_csv(const Solution& sol, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "system,deviation\n" << std::setprecision(17);
  for (std::size_t i = 0; i < sol.deviations.size(); ++i)
    os << (i + 1) << "," << sol.deviations[i] << "\n";
}

void write_tuning_table_csv(const std::vector<BicRow>& table, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "lambda,k,sse,bic,status\n" << std::setprecision(17);
  for (const auto& row : table) {
    if (row.failed)
      os << row.lambda << ",,,," << "failed\n";
    else
      os << row.lambda << "," << row.k << "," << row.sse << "," << row.bic << ",ok\n";
  }
}

void write_admm_trace_csv(const std::vector<AdmmTraceRow>& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "iteration,primal_residual,dual_residual,rho,objective\n" << std::setprecision(17);
  for (const auto& r : trace)
    os << r.iteration << "," << r.primal_residual << "," << r.dual_residual << "," << r.rho << ","
       << r.objective << "\n";
}

void write_deviation_svg(const Solution& sol, const std::string& title, const std::string& path) {
  const int n = static_cast<int>(sol.deviations.size());
  const double width = 900.0, height = 300.0, margin = 40.0;
  double dmax = 1e-300;
  for (double d : sol.deviations) dmax = std::max(dmax, d);
  double bar_w = (width - 2 * margin) / std::max(n, 1);

  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n";
  os << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
     << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  for (int i = 0; i < n; ++i) {
    double h = (height - 2 * margin) * sol.deviations[i] / dmax;
    double x = margin + i * bar_w;
    os << "<rect x=\"" << x << "\" y=\"" << height - margin - h << "\" width=\"" << bar_w * 0.8
       << "\" height=\"" << h << "\" fill=\"steelblue\"/>\n";
  }
  os << "</svg>\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace fleet

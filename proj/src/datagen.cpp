#include "fleet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fleet {

double NormalSampler::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 53-bit uniforms; u1 kept away from 0 for the log.
  double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1p-53;
  double u2 = static_cast<double>(gen_() >> 11) * 0x1p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

Mat psd_cholesky(const Mat& cov, const std::string& label) {
  const Eigen::Index m = cov.rows();
  if (cov.cols() != m) throw std::invalid_argument(label + ": covariance not square");
  double scale = std::max(cov.cwiseAbs().maxCoeff(), 1.0);
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument(label + ": covariance not symmetric");

  Mat L = Mat::Zero(m, m);
  const double tol = 1e-12 * scale;
  for (Eigen::Index j = 0; j < m; ++j) {
    double d = cov(j, j) - L.row(j).head(j).squaredNorm();
    if (d > tol) {
      L(j, j) = std::sqrt(d);
      for (Eigen::Index i = j + 1; i < m; ++i)
        L(i, j) = (cov(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    } else if (d >= -tol) {
      // semidefinite direction: zero column
    } else {
      throw std::invalid_argument(label + ": covariance not positive semidefinite");
    }
  }
  return L;
}

Vec mvn_sample(const Vec& mean, const Mat& chol_lower, NormalSampler& rng) {
  Vec z(mean.size());
  for (Eigen::Index q = 0; q < z.size(); ++q) z[q] = rng.next();
  return mean + chol_lower * z;
}

Vec mvn_sample_cov(const Vec& mean, const Mat& cov, NormalSampler& rng) {
  return mvn_sample(mean, psd_cholesky(cov, "cov"), rng);
}

void GenConfig::validate() const {
  if (n_systems < 1 || observations < 1 || dim < 1)
    throw std::invalid_argument("GenConfig: N, Omega and m must be positive");
  if (noise_variance < 0.0) throw std::invalid_argument("GenConfig: negative noise variance");
  auto need = [&](const Vec& v, const char* name) {
    if (v.size() != dim) throw std::invalid_argument(std::string("GenConfig: bad size for ") + name);
  };
  need(nominal_mean, "nominal_mean");
  need(anomal_mean, "anomal_mean");
  need(regressor_mean, "regressor_mean");
  for (int tag : anomaly_indices)
    if (tag < 1 || tag > n_systems) throw std::invalid_argument("GenConfig: anomaly tag out of range");
  psd_cholesky(nominal_cov, "nominal_cov");
  psd_cholesky(anomal_cov, "anomal_cov");
  psd_cholesky(regressor_cov, "regressor_cov");
}

GenConfig default_paper_config() {
  GenConfig c;
  c.n_systems = 200;
  c.observations = 500;
  c.dim = 4;
  c.noise_variance = 0.83;
  c.nominal_mean = Vec(4);
  c.nominal_mean << 0.8, -2.7, -0.63, 0.46;
  c.nominal_cov = Mat(4, 4);
  c.nominal_cov << 0.04, 0.12, -0.02, 0.02,
                   0.12, 0.84, -0.09, 0.10,
                  -0.02, -0.09, 0.03, 0.00,
                   0.02, 0.10, 0.00, 0.05;
  c.anomal_mean = Vec(4);
  c.anomal_mean << 3.5, -0.1, -3.0, 0.001;
  c.anomal_cov = c.nominal_cov;
  c.regressor_mean = Vec(4);
  c.regressor_mean << 0.95, -1.22, -2.79, 7.11;
  c.regressor_cov = Mat(4, 4);
  c.regressor_cov << 0.25, -0.02, 0.12, -0.04,
                    -0.02, 0.45, 0.03, -0.52,
                     0.12, 0.03, 1.05, -1.26,
                    -0.04, -0.52, -1.26, 3.89;
  c.anomaly_indices = {27, 161, 183};
  c.seed = 0;
  return c;
}

FleetDataset generate_fleet(const GenConfig& config) {
  config.validate();
  const Mat l_nominal = psd_cholesky(config.nominal_cov, "nominal_cov");
  const Mat l_anomal = psd_cholesky(config.anomal_cov, "anomal_cov");
  const Mat l_regressor = psd_cholesky(config.regressor_cov, "regressor_cov");
  const double noise_std = std::sqrt(config.noise_variance);

  NormalSampler rng(config.seed);
  FleetDataset fleet;
  fleet.systems.reserve(config.n_systems);
  TruthRecord truth;
  truth.noise_variance = config.noise_variance;
  truth.anomalies = config.anomaly_indices;
  std::sort(truth.anomalies.begin(), truth.anomalies.end());

  for (int tag = 1; tag <= config.n_systems; ++tag) {
    bool anomal = std::binary_search(truth.anomalies.begin(), truth.anomalies.end(), tag);
    Vec theta = anomal ? mvn_sample(config.anomal_mean, l_anomal, rng)
                       : mvn_sample(config.nominal_mean, l_nominal, rng);
    SystemDataset sys;
    sys.regressors = Mat(config.observations, config.dim);
    for (int t = 0; t < config.observations; ++t)
      sys.regressors.row(t) = mvn_sample(config.regressor_mean, l_regressor, rng).transpose();
    sys.measurements = sys.regressors * theta;
    for (int t = 0; t < config.observations; ++t)
      sys.measurements[t] += noise_std * rng.next();
    truth.true_params.push_back(std::move(theta));
    fleet.systems.push_back(std::move(sys));
  }
  fleet.truth = std::move(truth);
  return fleet;
}

}  // namespace fleet

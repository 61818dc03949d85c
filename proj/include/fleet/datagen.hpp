#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fleet/types.hpp"

namespace fleet {

/// Deterministic standard-normal stream: mt19937-64 uniforms through a
/// fixed Box-Muller transform. The generator algorithm is pinned so the same
/// seed reproduces the same stream on every platform.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : gen_(seed) {}

  double next();

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Lower-triangular PSD Cholesky factor. Zero pivots produce zero columns;
/// an indefinite matrix raises std::invalid_argument naming `label`.
Mat psd_cholesky(const Mat& cov, const std::string& label);

/// mean + L z with z iid standard normal. Consumes exactly mean.size() draws.
Vec mvn_sample(const Vec& mean, const Mat& chol_lower, NormalSampler& rng);

/// Convenience overload factoring cov on the fly.
Vec mvn_sample_cov(const Vec& mean, const Mat& cov, NormalSampler& rng);

struct GenConfig {
  int n_systems = 0;        // N
  int observations = 0;     // Omega
  int dim = 0;              // m
  double noise_variance = 0.0;
  Vec nominal_mean;
  Mat nominal_cov;
  Vec anomal_mean;
  Mat anomal_cov;
  Vec regressor_mean;
  Mat regressor_cov;
  std::vector<int> anomaly_indices;  // 1-based tags
  std::uint64_t seed = 0;

  void validate() const;
};

/// The numerical-experiment constants: m=4, N=200, Omega=500, sigma^2=0.83,
/// anomalous tags {27, 161, 183} and the printed mean/covariance values.
GenConfig default_paper_config();

/// Draw order is fixed per system tag: parameter, then the Omega regressor
/// rows, then the Omega noise samples. Identical seed+config gives
/// bit-identical output.
FleetDataset generate_fleet(const GenConfig& config);

}  // namespace fleet

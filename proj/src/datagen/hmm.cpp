#include "tempex/datagen/hmm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tempex::data {

namespace {

Eigen::Matrix3d to_eigen(const Mat3& m) {
  Eigen::Matrix3d e;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) e(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return e;
}

double logistic(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

void HmmConfig::validate() const {
  if (features != 3) throw std::invalid_argument("hmm: exactly 3 features are supported");
  if (series == 0 || steps == 0) throw std::invalid_argument("hmm: series and steps must be positive");
  for (const auto& row : transition) {
    if (row[0] < 0 || row[1] < 0 || std::abs(row[0] + row[1] - 1.0) > 1e-12) {
      throw std::invalid_argument("hmm: transition rows must be probability vectors");
    }
  }
  for (int s = 0; s < 2; ++s) {
    const auto c = to_eigen(covariance[static_cast<std::size_t>(s)]);
    if (!c.isApprox(c.transpose(), 1e-12)) {
      throw std::invalid_argument("hmm: covariance of state " + std::to_string(s) + " is not symmetric");
    }
    Eigen::LLT<Eigen::Matrix3d> llt(c);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("hmm: covariance of state " + std::to_string(s) +
                                  " is not positive definite");
    }
  }
}

double hmm_label_probability(std::span<const double> x_t, int state) {
  return logistic(x_t[salient_feature(state)]);
}

std::array<double, 2> stationary_distribution(const HmmConfig& config) {
  const double to1 = config.transition[0][1];
  const double to0 = config.transition[1][0];
  if (to0 + to1 == 0.0) return {0.5, 0.5};
  const double p0 = to0 / (to0 + to1);
  return {p0, 1.0 - p0};
}

TimeSeriesDataset generate_hmm(const HmmConfig& config) {
  config.validate();
  const std::size_t N = config.series, T = config.steps, n = config.features;
  std::array<Eigen::Matrix3d, 2> chol;
  for (std::size_t s = 0; s < 2; ++s) chol[s] = Eigen::LLT<Eigen::Matrix3d>(to_eigen(config.covariance[s])).matrixL();
  const auto pi = stationary_distribution(config);

  TimeSeriesDataset d;
  d.samples = N;
  d.steps = T;
  d.features = n;
  d.label_kind = LabelKind::per_timestep;
  d.seed = config.seed;
  d.feature_names = {"x1", "x2", "x3"};
  d.x.resize(N * T * n);
  d.y.resize(N * T);
  d.states.resize(N * T);
  d.true_saliency.assign(N * T * n, 0);

  for (std::size_t i = 0; i < N; ++i) {
    std::mt19937_64 rng(derive_seed(config.seed, i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int state = unif(rng) < pi[0] ? 0 : 1;
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0) state = unif(rng) < config.transition[static_cast<std::size_t>(state)][0] ? 0 : 1;
      const auto s = static_cast<std::size_t>(state);
      const Eigen::Vector3d eps(gauss(rng), gauss(rng), gauss(rng));
      const Eigen::Vector3d v = chol[s] * eps;
      double* cell = d.x.data() + (i * T + t) * n;
      for (std::size_t f = 0; f < n; ++f) cell[f] = config.mean[s][f] + v(static_cast<Eigen::Index>(f));
      const double p = hmm_label_probability({cell, n}, state);
      d.y[i * T + t] = unif(rng) < p ? 1 : 0;
      d.states[i * T + t] = state;
      d.true_saliency[(i * T + t) * n + salient_feature(state)] = 1;
    }
  }
  return d;
}

}  // namespace tempex::data

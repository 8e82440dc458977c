#include "tempex/datagen/icu_like.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace tempex::data {

namespace {

const char* const kChannelNames[] = {
    "heart_rate", "sys_bp",    "resp_rate", "spo2",    "temperature", "bicarbonate",
    "platelets",  "anion_gap", "glucose",   "lactate", "creatinine",  "wbc",
};

}  // namespace

void IcuLikeConfig::validate() const {
  if (features < 4) throw std::invalid_argument("icu_like: at least 4 features are required");
  if (samples == 0 || steps < 3) throw std::invalid_argument("icu_like: invalid sizes");
  if (informative.empty() || informative.size() != weights.size()) {
    throw std::invalid_argument("icu_like: informative channels and weights must pair up");
  }
  for (auto c : informative) {
    if (c >= features) throw std::invalid_argument("icu_like: informative channel out of range");
  }
  if (!(late_fraction > 0.0 && late_fraction <= 1.0)) {
    throw std::invalid_argument("icu_like: late_fraction must lie in (0, 1]");
  }
}

std::size_t IcuLikeConfig::late_start() const {
  const auto width = static_cast<std::size_t>(std::llround(late_fraction * static_cast<double>(steps)));
  return steps - std::max<std::size_t>(width, 1);
}

TimeSeriesDataset generate_icu_like(const IcuLikeConfig& config) {
  config.validate();
  const std::size_t N = config.samples, T = config.steps, n = config.features;
  TimeSeriesDataset d;
  d.samples = N;
  d.steps = T;
  d.features = n;
  d.label_kind = LabelKind::per_sequence;
  d.seed = config.seed;
  d.x.resize(N * T * n);
  d.y.resize(N);
  for (std::size_t f = 0; f < n; ++f) {
    d.feature_names.push_back(f < std::size(kChannelNames) ? kChannelNames[f]
                                                           : "channel_" + std::to_string(f));
  }
  // Per-channel persistence spread between 0.6 and 0.95.
  std::vector<double> phi(n);
  for (std::size_t f = 0; f < n; ++f) {
    phi[f] = 0.6 + 0.35 * static_cast<double>(f % 5) / 4.0;
  }
  const std::size_t late = config.late_start();

  for (std::size_t i = 0; i < N; ++i) {
    std::mt19937_64 rng(derive_seed(config.seed, i));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double* s = d.x.data() + i * T * n;
    for (std::size_t f = 0; f < n; ++f) {
      const double innov = std::sqrt(1.0 - phi[f] * phi[f]);
      double v = gauss(rng);
      for (std::size_t t = 0; t < T; ++t) {
        if (t > 0) v = phi[f] * v + innov * gauss(rng);
        s[t * n + f] = v;
      }
    }
    double score = 0.0;
    for (std::size_t k = 0; k < config.informative.size(); ++k) {
      double avg = 0.0;
      for (std::size_t t = late; t < T; ++t) avg += s[t * n + config.informative[k]];
      score += config.weights[k] * avg / static_cast<double>(T - late);
    }
    const double z = config.gain * (score - config.offset);
    const double p = 1.0 / (1.0 + std::exp(-z));
    d.y[i] = unif(rng) < p ? 1 : 0;
  }

  // Standardize every channel over all N*T values.
  for (std::size_t f = 0; f < n; ++f) {
    double mu = 0.0;
    for (std::size_t r = 0; r < N * T; ++r) mu += d.x[r * n + f];
    mu /= static_cast<double>(N * T);
    double var = 0.0;
    for (std::size_t r = 0; r < N * T; ++r) var += (d.x[r * n + f] - mu) * (d.x[r * n + f] - mu);
    const double sd = std::sqrt(var / static_cast<double>(N * T));
    for (std::size_t r = 0; r < N * T; ++r) d.x[r * n + f] = (d.x[r * n + f] - mu) / (sd > 0 ? sd : 1.0);
  }
  return d;
}

TimeSeriesDataset generate_icu_like(std::size_t samples, std::size_t steps, std::size_t features,
                                    std::uint64_t seed) {
  IcuLikeConfig c;
  c.samples = samples;
  c.steps = steps;
  c.features = features;
  c.seed = seed;
  if (features < 6) c.informative = {0, 1, 2};
  return generate_icu_like(c);
}

}  // namespace tempex::data

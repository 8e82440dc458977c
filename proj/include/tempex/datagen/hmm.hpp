#pragma once

#include <array>
#include <cstdint>

#include "tempex/datagen/dataset.hpp"

namespace tempex::data {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

/// Two-state hidden Markov benchmark with three Gaussian features. The label
/// at each step is drawn from the second feature in state 0 and from the
/// third feature in state 1; the first feature never drives the label.
struct HmmConfig {
  std::size_t series = 1000;
  std::size_t steps = 200;
  std::size_t features = 3;
  /// transition[i][j] = P(s_{t+1} = j | s_t = i)
  std::array<std::array<double, 2>, 2> transition{{{0.9, 0.1}, {0.1, 0.9}}};
  std::array<Vec3, 2> mean{{{0.1, 1.6, 0.5}, {-0.1, -0.4, -1.5}}};
  std::array<Mat3, 2> covariance{{
      {{{0.8, 0.0, 0.0}, {0.0, 0.8, 0.2}, {0.0, 0.2, 0.8}}},
      {{{0.8, 0.0, 0.0}, {0.0, 0.8, 0.2}, {0.0, 0.2, 0.8}}},
  }};
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument on bad rows, n != 3 or non-PD covariances.
  void validate() const;
};

/// Index of the label-driving feature in the given state.
constexpr std::size_t salient_feature(int state) { return state == 0 ? 1 : 2; }

/// P(y_t = 1 | x_t, s_t): logistic of the state's salient feature.
double hmm_label_probability(std::span<const double> x_t, int state);

/// Stationary probability of each state for the configured chain.
std::array<double, 2> stationary_distribution(const HmmConfig& config);

/// Per-timestep labels, hidden states and ground-truth saliency (one marked
/// cell per step). Each series draws from its own seeded stream.
TimeSeriesDataset generate_hmm(const HmmConfig& config);

}  // namespace tempex::data

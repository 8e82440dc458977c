#pragma once

#include <cstdint>
#include <vector>

#include "tempex/datagen/dataset.hpp"

namespace tempex::data {

/// Synthetic vitals-like benchmark with a planted late-window signal.
///
/// Each channel is a stationary AR(1) process with unit variance. The
/// sequence label is Bernoulli(logistic(gain * (score - offset))) where score
/// is a signed combination of the informative channels averaged over the
/// final `late_fraction` of the window. Channels are standardized over the
/// whole dataset afterwards.
struct IcuLikeConfig {
  std::size_t samples = 1000;
  std::size_t steps = 48;
  std::size_t features = 8;
  std::vector<std::size_t> informative{0, 2, 5};
  std::vector<double> weights{1.5, -1.5, 1.0};
  double late_fraction = 1.0 / 3.0;
  double gain = 4.0;
  double offset = 0.5;
  std::uint64_t seed = 7;

  void validate() const;
  /// First step of the window that drives the label.
  [[nodiscard]] std::size_t late_start() const;
};

TimeSeriesDataset generate_icu_like(const IcuLikeConfig& config);

/// Convenience overload mirroring the common call shape.
TimeSeriesDataset generate_icu_like(std::size_t samples, std::size_t steps, std::size_t features,
                                    std::uint64_t seed);

}  // namespace tempex::data

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tempex/numerics/ops.hpp"

namespace tempex::testing {

using LossFn = std::function<num::Tensor(const std::vector<num::Tensor>&)>;

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
/// leaf entries, numeric by central differences.
inline double gradcheck(const LossFn& loss, std::vector<num::Tensor> leaves, double h = 1e-5,
                        double floor = 1e-3) {
  for (auto& l : leaves) l.clear_grad();
  num::backward(loss(leaves));
  double worst = 0.0;
  for (auto& leaf : leaves) {
    const auto analytic = std::vector<double>(leaf.grad().begin(), leaf.grad().end());
    auto values = leaf.mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double keep = values[j];
      values[j] = keep + h;
      const double up = loss(leaves).item();
      values[j] = keep - h;
      const double down = loss(leaves).item();
      values[j] = keep;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[j] - numeric) / denom);
    }
  }
  return worst;
}

inline std::vector<double> uniform(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

inline num::Tensor random_param(num::Shape shape, std::uint64_t seed, double lo = -2, double hi = 2) {
  const auto n = num::numel(shape);
  return num::Tensor::parameter(std::move(shape), uniform(n, lo, hi, seed));
}

/// Weighted sum with fixed random weights: a generic scalar readout.
inline num::Tensor probe(const num::Tensor& y, std::uint64_t seed = 99) {
  return num::sum(num::mul(y, num::Tensor::from(y.shape(), uniform(y.size(), -1, 1, seed))));
}

}  // namespace tempex::testing

#include "tempex/datagen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tempex::data {

std::string to_string(LabelKind k) {
  return k == LabelKind::per_timestep ? "per_timestep" : "per_sequence";
}

LabelKind parse_label_kind(const std::string& s) {
  if (s == "per_timestep") return LabelKind::per_timestep;
  if (s == "per_sequence") return LabelKind::per_sequence;
  throw std::invalid_argument("unknown label kind '" + s + "'");
}

std::span<const double> TimeSeriesDataset::sample(std::size_t i) const {
  return std::span<const double>(x).subspan(i * cells(), cells());
}

std::span<double> TimeSeriesDataset::sample(std::size_t i) {
  return std::span<double>(x).subspan(i * cells(), cells());
}

std::span<const std::uint8_t> TimeSeriesDataset::truth(std::size_t i) const {
  if (!has_truth()) throw std::logic_error("dataset has no ground-truth saliency");
  return std::span<const std::uint8_t>(true_saliency).subspan(i * cells(), cells());
}

std::span<const int> TimeSeriesDataset::labels(std::size_t i) const {
  const auto k = labels_per_sample();
  return std::span<const int>(y).subspan(i * k, k);
}

num::Tensor TimeSeriesDataset::batch(std::span<const std::size_t> indices) const {
  std::vector<double> v;
  v.reserve(indices.size() * cells());
  for (auto i : indices) {
    if (i >= samples) throw std::out_of_range("sample index " + std::to_string(i));
    auto s = sample(i);
    v.insert(v.end(), s.begin(), s.end());
  }
  return num::Tensor::from({indices.size(), steps, features}, std::move(v));
}

num::Tensor TimeSeriesDataset::all() const {
  return num::Tensor::from({samples, steps, features}, x);
}

TimeSeriesDataset TimeSeriesDataset::subset(std::span<const std::size_t> indices) const {
  TimeSeriesDataset out;
  out.samples = indices.size();
  out.steps = steps;
  out.features = features;
  out.label_kind = label_kind;
  out.feature_names = feature_names;
  out.seed = seed;
  for (auto i : indices) {
    if (i >= samples) throw std::out_of_range("sample index " + std::to_string(i));
    auto s = sample(i);
    out.x.insert(out.x.end(), s.begin(), s.end());
    auto l = labels(i);
    out.y.insert(out.y.end(), l.begin(), l.end());
    if (has_truth()) {
      auto t = truth(i);
      out.true_saliency.insert(out.true_saliency.end(), t.begin(), t.end());
    }
    if (!states.empty()) {
      out.states.insert(out.states.end(), states.begin() + static_cast<std::ptrdiff_t>(i * steps),
                        states.begin() + static_cast<std::ptrdiff_t>((i + 1) * steps));
    }
  }
  return out;
}

void TimeSeriesDataset::validate() const {
  if (x.size() != samples * steps * features) {
    throw std::invalid_argument("dataset: x holds " + std::to_string(x.size()) +
                                " values, expected N*T*n = " +
                                std::to_string(samples * steps * features));
  }
  if (y.size() != samples * labels_per_sample()) {
    throw std::invalid_argument("dataset: y holds " + std::to_string(y.size()) +
                                " labels, expected " + std::to_string(samples * labels_per_sample()));
  }
  for (int v : y) {
    if (v != 0 && v != 1) throw std::invalid_argument("dataset: labels must be 0 or 1");
  }
  if (has_truth() && true_saliency.size() != x.size()) {
    throw std::invalid_argument("dataset: true_saliency shape differs from x");
  }
  if (!states.empty() && states.size() != samples * steps) {
    throw std::invalid_argument("dataset: states shape differs from [N, T]");
  }
  if (!feature_names.empty() && feature_names.size() != features) {
    throw std::invalid_argument("dataset: feature_names has " +
                                std::to_string(feature_names.size()) + " entries for " +
                                std::to_string(features) + " features");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite value in x");
  }
}

Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction > 1.0) {
    throw std::invalid_argument("split: test fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  Split s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace tempex::data

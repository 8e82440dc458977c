#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tempex/numerics/tensor.hpp"

namespace tempex::data {

enum class LabelKind { per_timestep, per_sequence };

std::string to_string(LabelKind k);
LabelKind parse_label_kind(const std::string& s);

/// N sequences of T steps with n features, stored row-major as [N, T, n].
struct TimeSeriesDataset {
  std::size_t samples = 0;
  std::size_t steps = 0;
  std::size_t features = 0;
  std::vector<double> x;

  LabelKind label_kind = LabelKind::per_sequence;
  std::vector<int> y;  // [N, T] or [N], values in {0, 1}

  std::vector<std::uint8_t> true_saliency;  // [N, T, n]; empty when unknown
  std::vector<int> states;                  // hidden states [N, T]; HMM only
  std::vector<std::string> feature_names;
  std::uint64_t seed = 0;

  [[nodiscard]] bool has_truth() const { return !true_saliency.empty(); }
  [[nodiscard]] std::size_t cells() const { return steps * features; }

  [[nodiscard]] std::span<const double> sample(std::size_t i) const;
  [[nodiscard]] std::span<double> sample(std::size_t i);
  [[nodiscard]] std::span<const std::uint8_t> truth(std::size_t i) const;
  [[nodiscard]] std::span<const int> labels(std::size_t i) const;
  [[nodiscard]] std::size_t labels_per_sample() const {
    return label_kind == LabelKind::per_timestep ? steps : 1;
  }

  /// [B, T, n] tensor of the listed samples.
  [[nodiscard]] num::Tensor batch(std::span<const std::size_t> indices) const;
  [[nodiscard]] num::Tensor all() const;
  [[nodiscard]] TimeSeriesDataset subset(std::span<const std::size_t> indices) const;

  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
};

/// Deterministic train/test partition: a seeded shuffle, then the first
/// round(N * test_fraction) indices become the test split.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed);

/// Derives an independent stream seed from a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace tempex::data

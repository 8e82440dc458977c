#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tempex::explain {

/// Per-sample bookkeeping from the optimisation-based explainers.
struct SampleInfo {
  std::size_t iterations = 0;
  double loss = 0;
  double mask_term = 0;
  double generator_term = 0;
  double fit_term = 0;
  std::vector<double> loss_history;  // filled only when requested
};

/// Importance scores in [0, 1] for each (sample, t, feature) cell, stored
/// as [N, T, n].
struct SaliencyMap {
  std::string method;
  std::size_t steps = 0;
  std::size_t features = 0;
  std::vector<std::size_t> sample_ids;
  std::vector<double> scores;
  /// Unnormalised attributions for methods that rescale their output.
  std::vector<double> raw;
  std::vector<SampleInfo> info;

  [[nodiscard]] std::size_t samples() const { return sample_ids.size(); }
  [[nodiscard]] std::size_t cells() const { return steps * features; }
  [[nodiscard]] std::span<const double> sample(std::size_t i) const;

  /// Appends the samples of `other`, which must share method and shape.
  void append(const SaliencyMap& other);
  /// Throws std::invalid_argument on inconsistent sizes.
  void validate() const;
};

/// Rescales each sample's scores to [0, 1]; a constant sample maps to 0.
void minmax_normalize(std::vector<double>& scores, std::size_t cells);

// CSV with header "sample_id,t,feature,score", one row per cell.
void write_saliency_csv(const SaliencyMap& map, const std::filesystem::path& path);
SaliencyMap read_saliency_csv(const std::filesystem::path& path, const std::string& method = {});

}  // namespace tempex::explain

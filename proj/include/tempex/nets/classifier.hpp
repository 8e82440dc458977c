#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "tempex/datagen/dataset.hpp"
#include "tempex/nets/gru.hpp"

namespace tempex::nets {

enum class Readout { per_timestep, final_step };

std::string to_string(Readout r);
Readout parse_readout(const std::string& s);

struct ClassifierConfig {
  std::size_t input_size = 3;
  std::size_t hidden_size = 32;
  std::size_t classes = 2;
  Readout readout = Readout::per_timestep;
  Direction direction = Direction::forward;
  std::uint64_t seed = 0;
};

/// One-layer GRU with a linear readout: the black-box model under
/// explanation. Logits are [B, T, classes] per step or [B, classes] at the
/// final step.
class Classifier {
 public:
  static Classifier init(const ClassifierConfig& config);
  Classifier(GruParams gru, num::Tensor w_out, num::Tensor b_out, Readout readout);

  /// x: [B, T, n] (or [T, n], which drops the batch axis from the result).
  [[nodiscard]] num::Tensor logits(const num::Tensor& x) const;
  /// Always [B, R, classes], R = T for per-step readout and 1 otherwise.
  [[nodiscard]] num::Tensor sequence_logits(const num::Tensor& x) const;
  [[nodiscard]] num::Tensor probabilities(const num::Tensor& x) const;
  /// Probability of `target_class`, shape [B, R]. Throws std::out_of_range
  /// for an invalid class index.
  [[nodiscard]] num::Tensor class_probability(const num::Tensor& x, std::size_t target_class) const;

  [[nodiscard]] std::size_t output_rows(std::size_t steps) const {
    return readout_ == Readout::per_timestep ? steps : 1;
  }
  [[nodiscard]] std::size_t classes() const { return b_out_.size(); }
  [[nodiscard]] std::size_t input_size() const { return gru_.input_size; }
  [[nodiscard]] std::size_t hidden_size() const { return gru_.hidden_size; }
  [[nodiscard]] Readout readout() const { return readout_; }
  [[nodiscard]] const GruParams& gru() const { return gru_; }
  [[nodiscard]] const num::Tensor& readout_weight() const { return w_out_; }
  [[nodiscard]] const num::Tensor& readout_bias() const { return b_out_; }

  [[nodiscard]] std::vector<num::Tensor> parameters() const;
  /// Deep copy whose parameters are constants.
  [[nodiscard]] Classifier frozen() const;
  [[nodiscard]] bool is_frozen() const;
  /// All parameter values concatenated, for equality checks.
  [[nodiscard]] std::vector<double> flat_weights() const;

 private:
  GruParams gru_;
  num::Tensor w_out_;
  num::Tensor b_out_;
  Readout readout_;
};

struct TrainConfig {
  std::size_t epochs = 50;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Classifier model;
  std::vector<double> epoch_loss;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam on mean cross-entropy against the dataset labels. Per-step readout
/// needs per-step labels and vice versa. Throws TrainingError on a
/// non-finite loss, naming the epoch and batch.
TrainResult train_classifier(const data::TimeSeriesDataset& dataset, const ClassifierConfig& model,
                             const TrainConfig& train);

/// Area under the ROC curve of `scores` against binary `labels`; ties count
/// half.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Checkpoint: JSON object {"format": "tempex-classifier", "version": 1,
// "input_size", "hidden_size", "classes", "direction", "readout",
// "tensors": {name: {"shape": [...], "data": [...]}}}. Doubles are written
// with round-trip precision.
void save_classifier(const Classifier& model, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace tempex::nets

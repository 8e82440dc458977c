#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tempex/nets/gru.hpp"
#include "tempex/numerics/tensor.hpp"

// All operators take x as [T, n] or [B, T, n]; time is the second-to-last
// axis and features the last.
namespace tempex::perturb {

enum class FixedKind { window_average, past_window_average, gaussian_blur };

std::string to_string(FixedKind k);
FixedKind parse_fixed_kind(const std::string& s);

struct FixedPerturbationConfig {
  FixedKind kind = FixedKind::gaussian_blur;
  std::size_t window = 2;
  double sigma_max = 2.0;

  void validate() const;
};

/// Centered moving average over [t - W, t + W], truncated at the ends.
num::Tensor window_average(const num::Tensor& x, std::size_t window);
/// Trailing moving average over [t - W, t], truncated at the start.
num::Tensor past_window_average(const num::Tensor& x, std::size_t window);

/// Normalized kernel weights exp(-d^2 / 2 sigma^2) of output step t over all
/// `steps` inputs, zero beyond |d| > 4 sigma. sigma = 0 puts all mass on t.
std::vector<double> blur_kernel(std::size_t steps, std::size_t t, double sigma);

/// Per-cell temporal blur with bandwidth sigma_max * (1 - m[t, i]).
/// Differentiable in both x and m.
num::Tensor gaussian_blur(const num::Tensor& x, const num::Tensor& m, double sigma_max);

/// m * x + (1 - m) * mu for the window kinds; the blur kind is returned
/// as gaussian_blur(x, m) directly.
num::Tensor apply_fixed(const num::Tensor& x, const num::Tensor& m, const FixedPerturbationConfig& config);

/// Trainable mask in [0, 1], projected back into the box after each update.
class Mask {
 public:
  explicit Mask(num::Shape shape, double init = 0.5);

  [[nodiscard]] const num::Tensor& values() const { return values_; }
  [[nodiscard]] num::Tensor& values() { return values_; }
  /// Clamps every entry to [0, 1].
  void project();
  [[nodiscard]] bool in_box() const;

 private:
  num::Tensor values_;
};

enum class GeneratorKind { zero, unidirectional, bidirectional };

std::string to_string(GeneratorKind k);
GeneratorKind parse_generator_kind(const std::string& s);

/// NN(x): a GRU over x followed by a linear head back to n features per
/// step. Every row of a batch owns its weights, drawn from its own seed, so
/// a row behaves exactly like a generator built for that sample alone.
class PerturbationGenerator {
 public:
  /// hidden = 0 means hidden size n.
  static PerturbationGenerator init(GeneratorKind kind, std::size_t features,
                                    std::span<const std::uint64_t> row_seeds, std::size_t hidden = 0);

  /// x: [B, T, n] with B equal to the number of rows. Output has x's shape.
  [[nodiscard]] num::Tensor operator()(const num::Tensor& x) const;

  [[nodiscard]] GeneratorKind kind() const { return kind_; }
  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t features() const { return features_; }
  /// Empty for the zero generator.
  [[nodiscard]] std::vector<num::Tensor> parameters() const;

 private:
  GeneratorKind kind_ = GeneratorKind::zero;
  std::size_t rows_ = 0;
  std::size_t features_ = 0;
  nets::GruParams gru_;
  num::Tensor w_head_;  // [B, width, n]
  num::Tensor b_head_;  // [B, 1, n]
};

/// m * x + (1 - m) * nn.
num::Tensor apply_learned(const num::Tensor& x, const num::Tensor& m, const num::Tensor& nn);
num::Tensor apply_learned(const num::Tensor& x, const num::Tensor& m, const PerturbationGenerator& generator);

}  // namespace tempex::perturb

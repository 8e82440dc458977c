#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tempex/numerics/tensor.hpp"

namespace tempex::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed set of leaf tensors.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  /// Applies one update. Every parameter must carry a gradient.
  void step();

  /// Like step(), but parameters are treated as stacks of independent rows
  /// along axis 0 and only rows with active[row] != 0 are touched. All
  /// parameters must share the leading dimension active.size().
  void step(std::span<const std::uint8_t> active);

  void zero_grad();

  [[nodiscard]] std::uint64_t steps() const { return step_; }
  [[nodiscard]] const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  [[nodiscard]] const std::vector<Tensor>& params() const { return params_; }

 private:
  void update(std::span<const std::uint8_t> active);

  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m1_;
  std::vector<std::vector<double>> m2_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

}  // namespace tempex::num

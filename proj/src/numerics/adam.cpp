#include "tempex/numerics/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace tempex::num {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].is_leaf() || !params_[i].requires_grad()) {
      throw std::invalid_argument("Adam: parameter '" + params_[i].name() +
                                  "' is not a trainable leaf");
    }
    m1_.emplace_back(params_[i].size(), 0.0);
    m2_.emplace_back(params_[i].size(), 0.0);
  }
}

void Adam::step() { update({}); }

void Adam::step(std::span<const std::uint8_t> active) {
  for (const auto& p : params_) {
    if (p.rank() == 0 || p.dim(0) != active.size()) {
      throw ShapeError("Adam::step: parameter '" + p.name() + "' " + to_string(p.shape()) +
                       " does not have leading dimension " + std::to_string(active.size()));
    }
  }
  update(active);
}

void Adam::update(std::span<const std::uint8_t> active) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw std::logic_error("Adam: missing gradient for parameter '" +
                             (params_[i].name().empty() ? "#" + std::to_string(i)
                                                        : params_[i].name()) +
                             "'");
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].mutable_values();
    const auto g = params_[i].grad();
    auto& m = m1_[i];
    auto& v = m2_[i];
    const std::size_t row = active.empty() ? w.size() : w.size() / active.size();
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!active.empty() && !active[j / row]) continue;
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace tempex::num

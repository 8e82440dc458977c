#pragma once

#include <vector>

#include "tempex/numerics/tensor.hpp"

namespace tempex::num {

// Elementwise binary ops. Shapes must match, or one operand must broadcast
// onto the other (right-aligned, each dim equal or 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws DomainError if any divisor is zero.
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
/// 1 - x
Tensor one_minus(const Tensor& x);

/// a[..., K] x b[K, M] -> [..., M]
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[B, M, K] x b[B, K, N] -> [B, M, N]
Tensor batched_matmul(const Tensor& a, const Tensor& b);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
/// Throws DomainError on non-positive input.
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
/// Gradient passes where lo <= x <= hi and is zero elsewhere.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces one axis away.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concatenate(const std::vector<Tensor>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Reverses the order of entries along `axis`.
Tensor flip(const Tensor& x, std::size_t axis);

/// Along the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

/// Sum of absolute values.
Tensor l1_norm(const Tensor& x);
/// Mean squared difference.
Tensor mse(const Tensor& a, const Tensor& b);

/// Cross-entropy of `logits` against target probabilities over the last
/// axis; returns one loss per row (the last axis is reduced away). A last
/// axis of size 1 is read as a single Bernoulli logit. Targets are constants.
/// Terms with zero target weight contribute 0 (0 * ln 0 := 0).
Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& target);

/// Ascending sort along the last axis; gradient is routed back through the
/// permutation.
Tensor sort(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(scale(a, -1.0), s); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

}  // namespace tempex::num

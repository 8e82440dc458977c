#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tempex/numerics/tensor.hpp"

namespace tempex::nets {

enum class Direction { forward, backward, bidirectional };

std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

/// Weights of one recurrent pass. Gate blocks are laid out as
/// [reset | update | candidate] along the last axis.
///
/// Shared form:     w_input [n, 3H], w_hidden [H, 3H], b_input [3H], b_hidden [3H].
/// Per-sample form: the same with a leading batch axis B, so each sequence
///                  in a batch runs through its own weights.
struct GruWeights {
  num::Tensor w_input;
  num::Tensor w_hidden;
  num::Tensor b_input;
  num::Tensor b_hidden;

  [[nodiscard]] bool per_sample() const { return w_input.rank() == 3; }
  [[nodiscard]] std::vector<num::Tensor> tensors() const {
    return {w_input, w_hidden, b_input, b_hidden};
  }
};

struct GruParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Direction direction = Direction::forward;
  GruWeights first;                  // forward pass (or the only pass)
  std::optional<GruWeights> second;  // reverse pass when bidirectional

  [[nodiscard]] std::size_t output_size() const {
    return direction == Direction::bidirectional ? 2 * hidden_size : hidden_size;
  }
  [[nodiscard]] std::vector<num::Tensor> tensors() const;
  /// Throws ShapeError when any weight disagrees with (input_size, hidden_size).
  void validate() const;
};

/// Uniform(-k, k) init with k = 1/sqrt(H). With batch > 0 each of the
/// `batch` sequences gets its own independently drawn weights.
GruParams init_gru(std::size_t input_size, std::size_t hidden_size, Direction direction,
                   std::mt19937_64& rng, std::size_t batch = 0, const std::string& prefix = "gru");

/// One recurrent step built from primitive ops:
///   r = s(x Wr + br + h Ur + cr), z = s(x Wz + bz + h Uz + cz),
///   c = tanh(x Wc + bc + r * (h Uc + cc)), h' = (1 - z) * c + z * h.
/// x_t: [B, n] or [n]; h_prev: [B, H] or [H]. Shared weights only.
num::Tensor gru_cell_step(const num::Tensor& x_t, const num::Tensor& h_prev,
                          const GruWeights& w);

/// Whole-sequence pass as a single recorded op with its own backward rule.
/// x: [B, T, n] -> [B, T, H]; initial state zero. With reverse the sequence
/// is consumed from t = T-1 down to 0 and outputs stay aligned with inputs.
num::Tensor gru_layer(const num::Tensor& x, const GruWeights& w, bool reverse);

/// x: [B, T, n] or [T, n]. Output [.., T, H] or [.., T, 2H] (forward half
/// first) for bidirectional.
num::Tensor gru_forward(const num::Tensor& x, const GruParams& params);

}  // namespace tempex::nets

#include "tempex/nets/gru.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "tempex/numerics/ops.hpp"

namespace tempex::nets {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using CVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using StridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// out[j] += sum_i m[i, j]. Kept as a plain loop: Eigen's vectorized
// column reduction changes summation order with buffer alignment.
void add_row_sums(const double* m, std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += m[i * cols + j];
  }
}

num::Tensor uniform_tensor(num::Shape shape, double k, std::mt19937_64& rng, std::string name) {
  std::uniform_real_distribution<double> dist(-k, k);
  std::vector<double> v(num::numel(shape));
  for (auto& x : v) x = dist(rng);
  return num::Tensor::parameter(std::move(shape), std::move(v), std::move(name));
}

GruWeights init_weights(std::size_t n, std::size_t h, std::mt19937_64& rng, std::size_t batch,
                        const std::string& prefix) {
  const double k = 1.0 / std::sqrt(static_cast<double>(h));
  auto shape = [batch](num::Shape s) {
    if (batch > 0) s.insert(s.begin(), batch);
    return s;
  };
  GruWeights w;
  w.w_input = uniform_tensor(shape({n, 3 * h}), k, rng, prefix + ".w_input");
  w.w_hidden = uniform_tensor(shape({h, 3 * h}), k, rng, prefix + ".w_hidden");
  w.b_input = uniform_tensor(shape({3 * h}), k, rng, prefix + ".b_input");
  w.b_hidden = uniform_tensor(shape({3 * h}), k, rng, prefix + ".b_hidden");
  return w;
}

void validate_weights(const GruWeights& w, std::size_t n, std::size_t h, const char* which) {
  const bool ps = w.per_sample();
  const std::size_t lead = ps ? 1 : 0;
  auto tail = [lead](const num::Tensor& t) {
    return num::Shape(t.shape().begin() + static_cast<std::ptrdiff_t>(lead), t.shape().end());
  };
  auto expect = [&](const num::Tensor& t, num::Shape want, const char* name) {
    if (t.rank() != want.size() + lead || tail(t) != want) {
      throw num::ShapeError(std::string("gru ") + which + " " + name, t.shape(), want);
    }
    if (ps && t.dim(0) != w.w_input.dim(0)) {
      throw num::ShapeError(std::string("gru ") + which + " " + name + " batch", t.shape(),
                            w.w_input.shape());
    }
  };
  expect(w.w_input, {n, 3 * h}, "w_input");
  expect(w.w_hidden, {h, 3 * h}, "w_hidden");
  expect(w.b_input, {3 * h}, "b_input");
  expect(w.b_hidden, {3 * h}, "b_hidden");
}

// Saved activations of a forward pass, all laid out [B, T, H].
struct GruTrace {
  std::vector<double> reset, update, cand, hidden_cand;  // hidden_cand = h Uc + cc
};

}  // namespace

std::string to_string(Direction d) {
  switch (d) {
    case Direction::forward: return "forward";
    case Direction::backward: return "backward";
    case Direction::bidirectional: return "bidirectional";
  }
  return "?";
}

Direction parse_direction(const std::string& s) {
  if (s == "forward") return Direction::forward;
  if (s == "backward") return Direction::backward;
  if (s == "bidirectional") return Direction::bidirectional;
  throw std::invalid_argument("unknown GRU direction '" + s + "'");
}

std::vector<num::Tensor> GruParams::tensors() const {
  auto out = first.tensors();
  if (second) {
    auto more = second->tensors();
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

void GruParams::validate() const {
  validate_weights(first, input_size, hidden_size, "first");
  if ((direction == Direction::bidirectional) != second.has_value()) {
    throw std::invalid_argument("gru: bidirectional params need exactly two weight sets");
  }
  if (second) validate_weights(*second, input_size, hidden_size, "second");
}

GruParams init_gru(std::size_t input_size, std::size_t hidden_size, Direction direction,
                   std::mt19937_64& rng, std::size_t batch, const std::string& prefix) {
  if (input_size == 0 || hidden_size == 0) {
    throw std::invalid_argument("gru: input and hidden sizes must be positive");
  }
  GruParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.direction = direction;
  p.first = init_weights(input_size, hidden_size, rng, batch, prefix + ".first");
  if (direction == Direction::bidirectional) {
    p.second = init_weights(input_size, hidden_size, rng, batch, prefix + ".second");
  }
  return p;
}

num::Tensor gru_cell_step(const num::Tensor& x_t, const num::Tensor& h_prev,
                          const GruWeights& w) {
  if (w.per_sample()) throw std::invalid_argument("gru_cell_step: shared weights only");
  const std::size_t h = w.w_hidden.dim(0);
  if (x_t.shape().back() != w.w_input.dim(0)) {
    throw num::ShapeError("gru_cell_step input", x_t.shape(), w.w_input.shape());
  }
  if (h_prev.shape().back() != h) {
    throw num::ShapeError("gru_cell_step hidden", h_prev.shape(), w.w_hidden.shape());
  }
  const std::size_t axis = x_t.rank() - 1;
  auto gx = num::matmul(x_t, w.w_input) + w.b_input;
  auto gh = num::matmul(h_prev, w.w_hidden) + w.b_hidden;
  auto r = num::sigmoid(num::slice(gx, axis, 0, h) + num::slice(gh, axis, 0, h));
  auto z = num::sigmoid(num::slice(gx, axis, h, 2 * h) + num::slice(gh, axis, h, 2 * h));
  auto c = num::tanh(num::slice(gx, axis, 2 * h, 3 * h) + r * num::slice(gh, axis, 2 * h, 3 * h));
  return num::one_minus(z) * c + z * h_prev;
}

num::Tensor gru_layer(const num::Tensor& x, const GruWeights& w, bool reverse) {
  if (x.rank() != 3) throw num::ShapeError("gru_layer expects [B, T, n], got " + num::to_string(x.shape()));
  const std::size_t B = x.dim(0), T = x.dim(1), n = x.dim(2);
  if (T == 0) throw std::invalid_argument("gru_layer: empty sequence");
  const bool ps = w.per_sample();
  const std::size_t H = w.w_hidden.dim(ps ? 1 : 0);
  validate_weights(w, n, H, "layer");
  if (ps && w.w_input.dim(0) != B) {
    throw num::ShapeError("gru_layer per-sample batch", x.shape(), w.w_input.shape());
  }
  const std::size_t G = 3 * H;
  // Weight groups: one group spanning all rows, or one per sample.
  const std::size_t groups = ps ? B : 1;
  const std::size_t rows_per_group = ps ? 1 : B;

  auto trace = std::make_shared<GruTrace>();
  trace->reset.resize(B * T * H);
  trace->update.resize(B * T * H);
  trace->cand.resize(B * T * H);
  trace->hidden_cand.resize(B * T * H);
  std::vector<double> out(B * T * H);

  // Input projections for every (b, t): row b*T + t.
  RowMat gx(B * T, G);
  {
    CMatMap xm(x.values().data(), B * T, n);
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t r0 = g * rows_per_group * T, nr = rows_per_group * T;
      CMatMap wi(w.w_input.values().data() + g * n * G, n, G);
      CVecMap bi(w.b_input.values().data() + g * G, G);
      gx.middleRows(r0, nr).noalias() = xm.middleRows(r0, nr) * wi;
      gx.middleRows(r0, nr).rowwise() += bi;
    }
  }

  RowMat h = RowMat::Zero(B, H);
  RowMat gh(B, G);
  RowMat rz(B, 2 * H);
  RowMat cand(B, H);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t r0 = g * rows_per_group;
      CMatMap wh(w.w_hidden.values().data() + g * H * G, H, G);
      CVecMap bh(w.b_hidden.values().data() + g * G, G);
      gh.middleRows(r0, rows_per_group).noalias() = h.middleRows(r0, rows_per_group) * wh;
      gh.middleRows(r0, rows_per_group).rowwise() += bh;
    }
    // Gate nonlinearities over the whole [B, 3H] block so exp vectorizes.
    StridedMap gxt(gx.data() + t * G, B, G, Eigen::OuterStride<>(T * G));
    rz = gxt.leftCols(2 * H) + gh.leftCols(2 * H);
    rz = (1.0 + (-rz.array()).exp()).inverse();
    cand = gxt.rightCols(H) + rz.leftCols(H).cwiseProduct(gh.rightCols(H));
    cand = 1.0 - 2.0 / ((2.0 * cand.array()).exp() + 1.0);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t base = (b * T + t) * H;
      for (std::size_t j = 0; j < H; ++j) {
        const double z = rz(b, H + j);
        const double c = cand(b, j);
        const double hn = (1.0 - z) * c + z * h(b, j);
        trace->reset[base + j] = rz(b, j);
        trace->update[base + j] = z;
        trace->cand[base + j] = c;
        trace->hidden_cand[base + j] = gh(b, 2 * H + j);
        out[base + j] = hn;
        h(b, j) = hn;
      }
    }
  }

  auto saved_out = std::make_shared<std::vector<double>>(out);
  std::vector<num::Tensor> inputs{x, w.w_input, w.w_hidden, w.b_input, w.b_hidden};
  return num::custom_op(
      "gru_layer", {B, T, H}, std::move(out), std::move(inputs),
      [=](std::span<const double> dout, std::span<num::OpInput> in) {
        const auto& hs = *saved_out;
        RowMat dgx(B * T, G);
        RowMat dgh(B, G);
        RowMat dh_next = RowMat::Zero(B, H);
        RowMat h_prev(B, H);
        for (std::size_t s = T; s-- > 0;) {
          const std::size_t t = reverse ? T - 1 - s : s;
          const bool first = s == 0;
          const std::size_t tp = reverse ? t + 1 : t - 1;  // previous step in processing order
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = (b * T + t) * H;
            double* dgxr = dgx.data() + (b * T + t) * G;
            double* dghr = dgh.data() + b * G;
            for (std::size_t j = 0; j < H; ++j) {
              const double hp = first ? 0.0 : hs[(b * T + tp) * H + j];
              h_prev(b, j) = hp;
              const double dh = dout[base + j] + dh_next(b, j);
              const double r = trace->reset[base + j];
              const double z = trace->update[base + j];
              const double c = trace->cand[base + j];
              const double dc = dh * (1.0 - z);
              const double dz = dh * (hp - c);
              const double dac = dc * (1.0 - c * c);
              const double dr = dac * trace->hidden_cand[base + j];
              const double daz = dz * z * (1.0 - z);
              const double dar = dr * r * (1.0 - r);
              dgxr[j] = dar;
              dgxr[H + j] = daz;
              dgxr[2 * H + j] = dac;
              dghr[j] = dar;
              dghr[H + j] = daz;
              dghr[2 * H + j] = dac * r;
              dh_next(b, j) = dh * z;
            }
          }
          for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t r0 = g * rows_per_group, nr = rows_per_group;
            CMatMap wh(in[2].value.data() + g * H * G, H, G);
            dh_next.middleRows(r0, nr).noalias() += dgh.middleRows(r0, nr) * wh.transpose();
            if (in[2].wants_grad()) {
              MatMap dwh(in[2].grad.data() + g * H * G, H, G);
              dwh.noalias() += h_prev.middleRows(r0, nr).transpose() * dgh.middleRows(r0, nr);
            }
            if (in[4].wants_grad()) {
              add_row_sums(dgh.data() + r0 * G, nr, G, in[4].grad.data() + g * G);
            }
          }
        }
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t r0 = g * rows_per_group * T, nr = rows_per_group * T;
          CMatMap wi(in[1].value.data() + g * n * G, n, G);
          if (in[0].wants_grad()) {
            MatMap dx(in[0].grad.data(), B * T, n);
            dx.middleRows(r0, nr).noalias() += dgx.middleRows(r0, nr) * wi.transpose();
          }
          if (in[1].wants_grad()) {
            CMatMap xm(in[0].value.data(), B * T, n);
            MatMap dwi(in[1].grad.data() + g * n * G, n, G);
            dwi.noalias() += xm.middleRows(r0, nr).transpose() * dgx.middleRows(r0, nr);
          }
          if (in[3].wants_grad()) {
            add_row_sums(dgx.data() + r0 * G, nr, G, in[3].grad.data() + g * G);
          }
        }
      });
}

num::Tensor gru_forward(const num::Tensor& x, const GruParams& params) {
  if (x.rank() == 2) {
    auto y = gru_forward(num::reshape(x, {1, x.dim(0), x.dim(1)}), params);
    return num::reshape(y, {y.dim(1), y.dim(2)});
  }
  if (x.rank() != 3 || x.dim(2) != params.input_size) {
    throw num::ShapeError("gru_forward", x.shape(), {0, 0, params.input_size});
  }
  if (x.dim(1) == 0) throw std::invalid_argument("gru_forward: empty sequence");
  switch (params.direction) {
    case Direction::forward: return gru_layer(x, params.first, false);
    case Direction::backward: return gru_layer(x, params.first, true);
    case Direction::bidirectional:
      return num::concatenate({gru_layer(x, params.first, false), gru_layer(x, *params.second, true)},
                              2);
  }
  throw std::logic_error("unreachable");
}

}  // namespace tempex::nets

#include "tempex/numerics/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace tempex::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

bool broadcasts_onto(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const auto off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i] && small[i] != 1) return false;
  }
  return true;
}

// Flat index into `small` for every flat index of `big`.
std::vector<std::size_t> broadcast_map(const Shape& small, const Shape& big) {
  const auto rank = big.size();
  const auto off = rank - small.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = small.size(); i-- > 0;) {
    stride[off + i] = small[i] == 1 ? 0 : s;
    s *= small[i];
  }
  const auto n = numel(big);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t pos = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    map[flat] = pos;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      pos += stride[d];
      if (idx[d] < big[d]) break;
      pos -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return map;
}

struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_map;  // empty: identity
  std::vector<std::size_t> b_map;
};

Broadcast plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return {a, {}, {}};
  if (broadcasts_onto(b, a)) return {a, {}, broadcast_map(b, a)};
  if (broadcasts_onto(a, b)) return {b, broadcast_map(a, b), {}};
  throw ShapeError(op, a, b);
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  auto plan = plan_broadcast(op, a.shape(), b.shape());
  const auto n = numel(plan.out);
  const auto av = a.values();
  const auto bv = b.values();
  auto ai = [&plan](std::size_t i) { return plan.a_map.empty() ? i : plan.a_map[i]; };
  auto bi = [&plan](std::size_t i) { return plan.b_map.empty() ? i : plan.b_map[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[ai(i)], bv[bi(i)]);
  auto shape = plan.out;
  return custom_op(op, std::move(shape), std::move(out), {a, b},
                   [plan = std::move(plan), da, db](std::span<const double> g,
                                                    std::span<OpInput> in) {
                     auto ai = [&plan](std::size_t i) {
                       return plan.a_map.empty() ? i : plan.a_map[i];
                     };
                     auto bi = [&plan](std::size_t i) {
                       return plan.b_map.empty() ? i : plan.b_map[i];
                     };
                     const auto x = in[0].value;
                     const auto y = in[1].value;
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const double xa = x[ai(i)];
                       const double yb = y[bi(i)];
                       if (in[0].wants_grad()) in[0].grad[ai(i)] += g[i] * da(xa, yb);
                       if (in[1].wants_grad()) in[1].grad[bi(i)] += g[i] * db(xa, yb);
                     }
                   });
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  // deriv(x, y) receives the input and the forward output.
  auto saved = std::make_shared<std::vector<double>>(out);
  return custom_op(op, x.shape(), std::move(out), {x},
                   [saved, deriv](std::span<const double> g, std::span<OpInput> in) {
                     const auto v = in[0].value;
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       in[0].grad[i] += g[i] * deriv(v[i], (*saved)[i]);
                     }
                   });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Outer/axis/inner decomposition of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_axis(const char* op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + to_string(x.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.values()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor one_minus(const Tensor& x) {
  return unary(
      "one_minus", x, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul", a.shape(), b.shape());
  }
  const auto k = b.dim(0);
  const auto m = b.dim(1);
  const auto rows = a.size() / k;
  Shape out_shape = a.shape();
  out_shape.back() = m;
  std::vector<double> out(rows * m);
  MatMap(out.data(), rows, m).noalias() =
      CMatMap(a.values().data(), rows, k) * CMatMap(b.values().data(), k, m);
  return custom_op("matmul", std::move(out_shape), std::move(out), {a, b},
                   [rows, k, m](std::span<const double> g, std::span<OpInput> in) {
                     CMatMap gm(g.data(), rows, m);
                     if (in[0].wants_grad()) {
                       MatMap(in[0].grad.data(), rows, k).noalias() +=
                           gm * CMatMap(in[1].value.data(), k, m).transpose();
                     }
                     if (in[1].wants_grad()) {
                       MatMap(in[1].grad.data(), k, m).noalias() +=
                           CMatMap(in[0].value.data(), rows, k).transpose() * gm;
                     }
                   });
}

Tensor batched_matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("batched_matmul", a.shape(), b.shape());
  }
  const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MatMap(out.data() + i * m * n, m, n).noalias() =
        CMatMap(a.values().data() + i * m * k, m, k) *
        CMatMap(b.values().data() + i * k * n, k, n);
  }
  return custom_op("batched_matmul", {batch, m, n}, std::move(out), {a, b},
                   [batch, m, k, n](std::span<const double> g, std::span<OpInput> in) {
                     for (std::size_t i = 0; i < batch; ++i) {
                       CMatMap gm(g.data() + i * m * n, m, n);
                       if (in[0].wants_grad()) {
                         MatMap(in[0].grad.data() + i * m * k, m, k).noalias() +=
                             gm * CMatMap(in[1].value.data() + i * k * n, k, n).transpose();
                       }
                       if (in[1].wants_grad()) {
                         MatMap(in[1].grad.data() + i * k * n, k, n).noalias() +=
                             CMatMap(in[0].value.data() + i * m * k, m, k).transpose() * gm;
                       }
                     }
                   });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  const auto v = x.values();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return custom_op("sum", {}, {s}, {x}, [](std::span<const double> g, std::span<OpInput> in) {
    for (auto& d : in[0].grad) d += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto v = x.values();
  const double n = static_cast<double>(v.size());
  const double s = std::accumulate(v.begin(), v.end(), 0.0) / n;
  return custom_op("mean", {}, {s}, {x}, [n](std::span<const double> g, std::span<OpInput> in) {
    for (auto& d : in[0].grad) d += g[0] / n;
  });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  check_axis("sum", x, axis);
  const auto s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto v = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += v[(o * s.len + l) * s.inner + i];
  return custom_op("sum_axis", std::move(out_shape), std::move(out), {x},
                   [s](std::span<const double> g, std::span<OpInput> in) {
                     for (std::size_t o = 0; o < s.outer; ++o)
                       for (std::size_t l = 0; l < s.len; ++l)
                         for (std::size_t i = 0; i < s.inner; ++i)
                           in[0].grad[(o * s.len + l) * s.inner + i] += g[o * s.inner + i];
                   });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  check_axis("mean", x, axis);
  return scale(sum(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) throw ShapeError("reshape", x.shape(), shape);
  return custom_op("reshape", std::move(shape), x.to_vector(), {x},
                   [](std::span<const double> g, std::span<OpInput> in) {
                     for (std::size_t i = 0; i < g.size(); ++i) in[0].grad[i] += g[i];
                   });
}

Tensor concatenate(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concatenate: no inputs");
  const Shape& ref = parts.front().shape();
  check_axis("concatenate", parts.front(), axis);
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = ref;
    if (a.size() != b.size()) throw ShapeError("concatenate", ref, p.shape());
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("concatenate", ref, p.shape());
    lens.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const auto s = split_at(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    const auto chunk = lens[k] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * s.len * s.inner + offset));
    }
    offset += chunk;
  }
  return custom_op("concatenate", std::move(out_shape), std::move(out), parts,
                   [s, lens](std::span<const double> g, std::span<OpInput> in) {
                     std::size_t offset = 0;
                     for (std::size_t k = 0; k < in.size(); ++k) {
                       const auto chunk = lens[k] * s.inner;
                       if (in[k].wants_grad()) {
                         for (std::size_t o = 0; o < s.outer; ++o)
                           for (std::size_t j = 0; j < chunk; ++j)
                             in[k].grad[o * chunk + j] += g[o * s.len * s.inner + offset + j];
                       }
                       offset += chunk;
                     }
                   });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis("slice", x, axis);
  if (begin > end || end > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of shape " +
                     to_string(x.shape()));
  }
  const auto s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const auto width = (end - begin) * s.inner;
  std::vector<double> out(s.outer * width);
  const auto v = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((o * s.len + begin) * s.inner), width,
                out.begin() + static_cast<std::ptrdiff_t>(o * width));
  }
  return custom_op("slice", std::move(out_shape), std::move(out), {x},
                   [s, begin, width](std::span<const double> g, std::span<OpInput> in) {
                     for (std::size_t o = 0; o < s.outer; ++o)
                       for (std::size_t j = 0; j < width; ++j)
                         in[0].grad[(o * s.len + begin) * s.inner + j] += g[o * width + j];
                   });
}

Tensor flip(const Tensor& x, std::size_t axis) {
  check_axis("flip", x, axis);
  const auto s = split_at(x.shape(), axis);
  auto index = [s](std::size_t o, std::size_t l, std::size_t i) {
    return (o * s.len + l) * s.inner + i;
  };
  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[index(o, s.len - 1 - l, i)] = v[index(o, l, i)];
  return custom_op("flip", x.shape(), std::move(out), {x},
                   [s, index](std::span<const double> g, std::span<OpInput> in) {
                     for (std::size_t o = 0; o < s.outer; ++o)
                       for (std::size_t l = 0; l < s.len; ++l)
                         for (std::size_t i = 0; i < s.inner; ++i)
                           in[0].grad[index(o, l, i)] += g[index(o, s.len - 1 - l, i)];
                   });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax requires rank >= 1");
  const auto p = x.shape().back();
  const auto rows = x.size() / p;
  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * p;
    const double mx = *std::max_element(row, row + p);
    double z = 0;
    for (std::size_t c = 0; c < p; ++c) z += out[r * p + c] = std::exp(row[c] - mx);
    for (std::size_t c = 0; c < p; ++c) out[r * p + c] /= z;
  }
  auto saved = std::make_shared<std::vector<double>>(out);
  return custom_op("softmax", x.shape(), std::move(out), {x},
                   [saved, rows, p](std::span<const double> g, std::span<OpInput> in) {
                     const auto& y = *saved;
                     for (std::size_t r = 0; r < rows; ++r) {
                       double dot = 0;
                       for (std::size_t c = 0; c < p; ++c) dot += g[r * p + c] * y[r * p + c];
                       for (std::size_t c = 0; c < p; ++c)
                         in[0].grad[r * p + c] += y[r * p + c] * (g[r * p + c] - dot);
                     }
                   });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("log_softmax requires rank >= 1");
  const auto p = x.shape().back();
  const auto rows = x.size() / p;
  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * p;
    const double mx = *std::max_element(row, row + p);
    double z = 0;
    for (std::size_t c = 0; c < p; ++c) z += std::exp(row[c] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < p; ++c) out[r * p + c] = row[c] - lz;
  }
  auto saved = std::make_shared<std::vector<double>>(out);
  return custom_op("log_softmax", x.shape(), std::move(out), {x},
                   [saved, rows, p](std::span<const double> g, std::span<OpInput> in) {
                     const auto& y = *saved;
                     for (std::size_t r = 0; r < rows; ++r) {
                       double gs = 0;
                       for (std::size_t c = 0; c < p; ++c) gs += g[r * p + c];
                       for (std::size_t c = 0; c < p; ++c)
                         in[0].grad[r * p + c] += g[r * p + c] - std::exp(y[r * p + c]) * gs;
                     }
                   });
}

Tensor l1_norm(const Tensor& x) { return sum(abs(x)); }

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse", a.shape(), b.shape());
  return mean(square(sub(a, b)));
}

Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& target) {
  if (logits.shape() != target.shape() || logits.rank() == 0) {
    throw ShapeError("cross_entropy_with_logits", logits.shape(), target.shape());
  }
  const auto p = logits.shape().back();
  const auto rows = logits.size() / p;
  Shape out_shape(logits.shape().begin(), logits.shape().end() - 1);
  const auto z = logits.values();
  const auto t = target.values();
  std::vector<double> out(rows);
  // d(loss)/d(logit), saved for backward.
  auto dlogit = std::make_shared<std::vector<double>>(logits.size());
  if (p == 1) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = z[r];
      // -[t ln s(v) + (1 - t) ln(1 - s(v))] in overflow-safe form.
      const double softplus = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
      out[r] = softplus - t[r] * v;
      (*dlogit)[r] = stable_sigmoid(v) - t[r];
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = z.data() + r * p;
      const double mx = *std::max_element(row, row + p);
      double zsum = 0;
      for (std::size_t c = 0; c < p; ++c) zsum += std::exp(row[c] - mx);
      const double lz = mx + std::log(zsum);
      double loss = 0, tsum = 0;
      for (std::size_t c = 0; c < p; ++c) {
        const double tc = t[r * p + c];
        tsum += tc;
        if (tc != 0.0) loss -= tc * (row[c] - lz);
      }
      out[r] = loss;
      for (std::size_t c = 0; c < p; ++c) {
        (*dlogit)[r * p + c] = tsum * std::exp(row[c] - lz) - t[r * p + c];
      }
    }
  }
  return custom_op("cross_entropy_with_logits", std::move(out_shape), std::move(out), {logits},
                   [dlogit, p](std::span<const double> g, std::span<OpInput> in) {
                     for (std::size_t i = 0; i < dlogit->size(); ++i)
                       in[0].grad[i] += g[i / p] * (*dlogit)[i];
                   });
}

Tensor sort(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("sort requires rank >= 1");
  const auto len = x.shape().back();
  const auto rows = x.size() / len;
  const auto v = x.values();
  auto perm = std::make_shared<std::vector<std::size_t>>(v.size());
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    auto first = perm->begin() + static_cast<std::ptrdiff_t>(r * len);
    std::iota(first, first + static_cast<std::ptrdiff_t>(len), r * len);
    std::stable_sort(first, first + static_cast<std::ptrdiff_t>(len),
                     [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    for (std::size_t j = 0; j < len; ++j) out[r * len + j] = v[(*perm)[r * len + j]];
  }
  return custom_op("sort", x.shape(), std::move(out), {x},
                   [perm](std::span<const double> g, std::span<OpInput> in) {
                     for (std::size_t i = 0; i < g.size(); ++i) in[0].grad[(*perm)[i]] += g[i];
                   });
}

}  // namespace tempex::num

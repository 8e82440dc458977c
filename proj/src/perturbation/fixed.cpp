#include <cmath>
#include <memory>
#include <stdexcept>

#include "tempex/numerics/ops.hpp"
#include "tempex/perturbation/perturbation.hpp"

namespace tempex::perturb {

std::string to_string(FixedKind k) {
  switch (k) {
    case FixedKind::window_average: return "window_average";
    case FixedKind::past_window_average: return "past_window_average";
    case FixedKind::gaussian_blur: return "gaussian_blur";
  }
  return "?";
}

FixedKind parse_fixed_kind(const std::string& s) {
  if (s == "window_average") return FixedKind::window_average;
  if (s == "past_window_average") return FixedKind::past_window_average;
  if (s == "gaussian_blur") return FixedKind::gaussian_blur;
  throw std::invalid_argument("unknown fixed perturbation '" + s + "'");
}

void FixedPerturbationConfig::validate() const {
  if (!(sigma_max > 0)) throw std::invalid_argument("fixed perturbation: sigma_max must be positive");
}

namespace {

struct Layout {
  std::size_t outer, steps, features;
};

Layout layout(const num::Tensor& x, const char* op) {
  if (x.rank() < 2) throw num::ShapeError(std::string(op) + " expects [..., T, n], got " + num::to_string(x.shape()));
  const auto T = x.dim(x.rank() - 2), n = x.dim(x.rank() - 1);
  return {T * n == 0 ? 0 : x.size() / (T * n), T, n};
}

// Moving average over [t - back, t + ahead] clipped to the series.
num::Tensor moving_average(const num::Tensor& x, std::size_t back, std::size_t ahead, const char* op) {
  const auto L = layout(x, op);
  const auto v = x.values();
  std::vector<double> out(v.size(), 0.0);
  const auto T = L.steps, n = L.features;
  auto range = [=](std::size_t t) {
    const std::size_t lo = t >= back ? t - back : 0;
    const std::size_t hi = std::min(T - 1, t + ahead);
    return std::pair{lo, hi};
  };
  for (std::size_t o = 0; o < L.outer; ++o) {
    const double* xs = v.data() + o * T * n;
    double* ys = out.data() + o * T * n;
    for (std::size_t t = 0; t < T; ++t) {
      const auto [lo, hi] = range(t);
      const double inv = 1.0 / static_cast<double>(hi - lo + 1);
      for (std::size_t s = lo; s <= hi; ++s)
        for (std::size_t i = 0; i < n; ++i) ys[t * n + i] += xs[s * n + i] * inv;
    }
  }
  return num::custom_op(op, x.shape(), std::move(out), {x},
                        [L, range](std::span<const double> g, std::span<num::OpInput> in) {
                          const auto T = L.steps, n = L.features;
                          for (std::size_t o = 0; o < L.outer; ++o) {
                            const double* gs = g.data() + o * T * n;
                            double* dx = in[0].grad.data() + o * T * n;
                            for (std::size_t t = 0; t < T; ++t) {
                              const auto [lo, hi] = range(t);
                              const double inv = 1.0 / static_cast<double>(hi - lo + 1);
                              for (std::size_t s = lo; s <= hi; ++s)
                                for (std::size_t i = 0; i < n; ++i) dx[s * n + i] += gs[t * n + i] * inv;
                            }
                          }
                        });
}

std::size_t radius(double sigma) { return static_cast<std::size_t>(std::floor(4.0 * sigma)); }

}  // namespace

num::Tensor window_average(const num::Tensor& x, std::size_t window) {
  return moving_average(x, window, window, "window_average");
}

num::Tensor past_window_average(const num::Tensor& x, std::size_t window) {
  return moving_average(x, window, 0, "past_window_average");
}

std::vector<double> blur_kernel(std::size_t steps, std::size_t t, double sigma) {
  if (t >= steps) throw std::out_of_range("blur_kernel: step outside the series");
  std::vector<double> w(steps, 0.0);
  const std::size_t r = sigma > 0 ? radius(sigma) : 0;
  const std::size_t lo = t >= r ? t - r : 0, hi = std::min(steps - 1, t + r);
  double z = 0;
  for (std::size_t s = lo; s <= hi; ++s) {
    const double d = static_cast<double>(s) - static_cast<double>(t);
    z += w[s] = r == 0 ? 1.0 : std::exp(-d * d / (2 * sigma * sigma));
  }
  for (auto& v : w) v /= z;
  return w;
}

num::Tensor gaussian_blur(const num::Tensor& x, const num::Tensor& m, double sigma_max) {
  if (!(sigma_max > 0)) throw std::invalid_argument("gaussian_blur: sigma_max must be positive");
  if (x.shape() != m.shape()) throw num::ShapeError("gaussian_blur", x.shape(), m.shape());
  const auto L = layout(x, "gaussian_blur");
  const auto T = L.steps, n = L.features;
  const auto xv = x.values(), mv = m.values();
  std::vector<double> out(xv.size());
  // Per cell: sum_k w_k d_k^2 and sum_k w_k d_k^2 x_k, for d(phi)/d(sigma).
  auto moments = std::make_shared<std::vector<double>>(2 * xv.size(), 0.0);
  for (std::size_t o = 0; o < L.outer; ++o) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = (o * T + t) * n + i;
        const double sigma = sigma_max * (1.0 - mv[c]);
        const std::size_t r = sigma > 0 ? radius(sigma) : 0;
        if (r == 0) {
          out[c] = xv[c];
          continue;
        }
        const std::size_t lo = t >= r ? t - r : 0, hi = std::min(T - 1, t + r);
        double z = 0, wx = 0, wd2 = 0, wd2x = 0;
        for (std::size_t s = lo; s <= hi; ++s) {
          const double d = static_cast<double>(s) - static_cast<double>(t);
          const double w = std::exp(-d * d / (2 * sigma * sigma));
          const double xs = xv[(o * T + s) * n + i];
          z += w;
          wx += w * xs;
          wd2 += w * d * d;
          wd2x += w * d * d * xs;
        }
        out[c] = wx / z;
        (*moments)[2 * c] = wd2 / z;
        (*moments)[2 * c + 1] = wd2x / z;
      }
    }
  }
  auto phi = std::make_shared<std::vector<double>>(out);
  return num::custom_op(
      "gaussian_blur", x.shape(), std::move(out), {x, m},
      [L, sigma_max, moments, phi](std::span<const double> g, std::span<num::OpInput> in) {
        const auto T = L.steps, n = L.features;
        const auto mv = in[1].value;
        for (std::size_t o = 0; o < L.outer; ++o) {
          for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t c = (o * T + t) * n + i;
              const double sigma = sigma_max * (1.0 - mv[c]);
              const std::size_t r = sigma > 0 ? radius(sigma) : 0;
              if (r == 0) {
                if (in[0].wants_grad()) in[0].grad[c] += g[c];
                continue;
              }
              if (in[0].wants_grad()) {
                const std::size_t lo = t >= r ? t - r : 0, hi = std::min(T - 1, t + r);
                double z = 0;
                for (std::size_t s = lo; s <= hi; ++s) {
                  const double d = static_cast<double>(s) - static_cast<double>(t);
                  z += std::exp(-d * d / (2 * sigma * sigma));
                }
                for (std::size_t s = lo; s <= hi; ++s) {
                  const double d = static_cast<double>(s) - static_cast<double>(t);
                  in[0].grad[(o * T + s) * n + i] += g[c] * std::exp(-d * d / (2 * sigma * sigma)) / z;
                }
              }
              if (in[1].wants_grad()) {
                // d(phi)/d(sigma) = (E[d^2 x] - phi E[d^2]) / sigma^3, d(sigma)/dm = -sigma_max.
                const double dphi = ((*moments)[2 * c + 1] - (*phi)[c] * (*moments)[2 * c]) / (sigma * sigma * sigma);
                in[1].grad[c] -= g[c] * dphi * sigma_max;
              }
            }
          }
        }
      });
}

num::Tensor apply_fixed(const num::Tensor& x, const num::Tensor& m, const FixedPerturbationConfig& c) {
  c.validate();
  if (x.shape() != m.shape()) throw num::ShapeError("apply_fixed", x.shape(), m.shape());
  switch (c.kind) {
    case FixedKind::gaussian_blur: return gaussian_blur(x, m, c.sigma_max);
    case FixedKind::window_average: return apply_learned(x, m, window_average(x, c.window));
    case FixedKind::past_window_average: return apply_learned(x, m, past_window_average(x, c.window));
  }
  throw std::invalid_argument("apply_fixed: unknown kind");
}

}  // namespace tempex::perturb

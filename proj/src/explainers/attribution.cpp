#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tempex/explainers/explainers.hpp"
#include "tempex/numerics/ops.hpp"

namespace tempex::explain {

namespace {

void prepare(const nets::Classifier& f, const num::Tensor& x) {
  if (!f.is_frozen()) throw ContractError("explainers require a frozen model (see Classifier::frozen)");
  if (x.rank() != 3 || x.dim(2) != f.input_size()) {
    throw num::ShapeError("explainer input", x.shape(), {0, 0, f.input_size()});
  }
}

std::vector<std::size_t> row_ids(std::span<const std::size_t> ids, std::size_t rows) {
  if (ids.empty()) {
    std::vector<std::size_t> out(rows);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  if (ids.size() != rows) throw std::invalid_argument("explainer: id count does not match the batch");
  return {ids.begin(), ids.end()};
}

SaliencyMap attribution_map(const std::string& method, const num::Tensor& x, std::span<const std::size_t> ids,
                            std::vector<double> raw, bool absolute) {
  SaliencyMap out;
  out.method = method;
  out.steps = x.dim(1);
  out.features = x.dim(2);
  out.sample_ids = row_ids(ids, x.dim(0));
  out.scores = raw;
  if (absolute) {
    for (auto& v : out.scores) v = std::abs(v);
  }
  minmax_normalize(out.scores, out.cells());
  out.raw = std::move(raw);
  return out;
}

}  // namespace

std::vector<std::size_t> predicted_classes(const nets::Classifier& f, const num::Tensor& x) {
  const auto logits = f.sequence_logits(x.detach());
  const auto p = logits.dim(2);
  const auto v = logits.values();
  std::vector<std::size_t> out(v.size() / p);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const auto row = v.subspan(r * p, p);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

num::Tensor target_score(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> classes) {
  const auto probs = num::softmax(f.sequence_logits(x));
  const auto B = probs.dim(0), R = probs.dim(1), p = probs.dim(2);
  if (classes.size() != B * R) throw std::invalid_argument("target_score: need one class per output row");
  std::vector<double> onehot(B * R * p, 0.0);
  for (std::size_t r = 0; r < B * R; ++r) {
    if (classes[r] >= p) throw std::out_of_range("target_score: class index out of range");
    onehot[r * p + classes[r]] = 1.0;
  }
  const auto picked = num::sum(probs * num::Tensor::from({B, R, p}, std::move(onehot)), 2);
  return num::sum(picked, 1);
}

SaliencyMap occlusion(const ScoreFn& score, const num::Tensor& x, std::span<const std::size_t> ids, double baseline) {
  if (x.rank() != 3) throw num::ShapeError("occlusion input", x.shape(), {0, 0, 0});
  const std::size_t B = x.dim(0), T = x.dim(1), n = x.dim(2);
  const auto base = score(x.detach()).to_vector();
  const auto xv = x.values();
  std::vector<double> raw(B * T * n, 0.0), work(xv.begin(), xv.end());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t b = 0; b < B; ++b) work[(b * T + t) * n + i] = baseline;
      const auto s = score(num::Tensor::from(x.shape(), work));
      for (std::size_t b = 0; b < B; ++b) {
        raw[(b * T + t) * n + i] = std::abs(base[b] - s[b]);
        work[(b * T + t) * n + i] = xv[(b * T + t) * n + i];
      }
    }
  }
  return attribution_map("occlusion", x, ids, std::move(raw), false);
}

SaliencyMap occlusion(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                      double baseline) {
  prepare(f, x);
  const auto classes = predicted_classes(f, x);
  return occlusion([&](const num::Tensor& v) { return target_score(f, v, classes); }, x, ids, baseline);
}

SaliencyMap augmented_occlusion(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                                const data::TimeSeriesDataset& reference, std::size_t draws, std::uint64_t seed) {
  prepare(f, x);
  if (reference.samples == 0 || reference.steps == 0) {
    throw std::invalid_argument("augmented_occlusion: empty reference dataset");
  }
  const std::size_t B = x.dim(0), T = x.dim(1), n = x.dim(2);
  if (reference.features != n) throw std::invalid_argument("augmented_occlusion: reference feature count differs");
  if (draws == 0) throw std::invalid_argument("augmented_occlusion: need at least one draw");
  const std::size_t pool = reference.samples * reference.steps;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool - 1);

  const auto classes = predicted_classes(f, x);
  const auto base = target_score(f, x.detach(), classes).to_vector();
  const auto xv = x.values();
  std::vector<double> raw(B * T * n, 0.0), work(xv.begin(), xv.end());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < draws; ++s) {
        for (std::size_t b = 0; b < B; ++b) work[(b * T + t) * n + i] = reference.x[pick(rng) * n + i];
        const auto score = target_score(f, num::Tensor::from(x.shape(), work), classes);
        for (std::size_t b = 0; b < B; ++b) raw[(b * T + t) * n + i] += std::abs(base[b] - score[b]) / draws;
      }
      for (std::size_t b = 0; b < B; ++b) work[(b * T + t) * n + i] = xv[(b * T + t) * n + i];
    }
  }
  return attribution_map("augmented_occlusion", x, ids, std::move(raw), false);
}

SaliencyMap integrated_gradients(const ScoreFn& score, const num::Tensor& x, std::span<const std::size_t> ids,
                                 std::size_t steps, double baseline) {
  if (x.rank() != 3) throw num::ShapeError("integrated_gradients input", x.shape(), {0, 0, 0});
  if (steps == 0) throw std::invalid_argument("integrated_gradients: steps must be positive");
  const auto xv = x.values();
  std::vector<double> avg(xv.size(), 0.0), point(xv.size());
  for (std::size_t k = 0; k < steps; ++k) {
    const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    for (std::size_t j = 0; j < xv.size(); ++j) point[j] = baseline + alpha * (xv[j] - baseline);
    auto leaf = num::Tensor::parameter(x.shape(), point);
    num::backward(num::sum(score(leaf)));
    const auto g = leaf.grad();
    for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += g[j] / static_cast<double>(steps);
  }
  std::vector<double> raw(xv.size());
  for (std::size_t j = 0; j < raw.size(); ++j) raw[j] = (xv[j] - baseline) * avg[j];
  return attribution_map("integrated_gradients", x, ids, std::move(raw), true);
}

SaliencyMap integrated_gradients(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                                 std::size_t steps, double baseline) {
  prepare(f, x);
  const auto classes = predicted_classes(f, x);
  return integrated_gradients([&](const num::Tensor& v) { return target_score(f, v, classes); }, x, ids, steps,
                              baseline);
}

}  // namespace tempex::explain

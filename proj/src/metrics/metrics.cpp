#include "tempex/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tempex/numerics/ops.hpp"

namespace tempex::metrics {

std::string to_string(ThresholdGrid g) { return g == ThresholdGrid::uniform ? "uniform" : "quantile"; }

ThresholdGrid parse_threshold_grid(const std::string& s) {
  if (s == "uniform") return ThresholdGrid::uniform;
  if (s == "quantile") return ThresholdGrid::quantile;
  throw std::invalid_argument("unknown threshold grid '" + s + "'");
}

std::string to_string(Substitution s) { return s == Substitution::time_average ? "time_average" : "zeros"; }

Substitution parse_substitution(const std::string& s) {
  if (s == "time_average" || s == "average") return Substitution::time_average;
  if (s == "zeros" || s == "zero") return Substitution::zeros;
  throw std::invalid_argument("unknown substitution '" + s + "'");
}

namespace {

std::vector<double> thresholds(std::span<const double> scores, std::size_t points, ThresholdGrid grid) {
  std::vector<double> tau(points);
  std::vector<double> sorted;
  if (grid == ThresholdGrid::quantile) {
    sorted.assign(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
  }
  for (std::size_t k = 0; k < points; ++k) {
    const double q = static_cast<double>(k + 1) / static_cast<double>(points + 1);
    if (grid == ThresholdGrid::uniform) {
      tau[k] = q;
    } else {
      const double pos = q * static_cast<double>(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, sorted.size() - 1);
      tau[k] = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    }
  }
  return tau;
}

double clip(double m) { return std::clamp(m, kLogEpsilon, 1.0 - kLogEpsilon); }

}  // namespace

AupAur aup_aur(std::span<const double> scores, std::span<const std::uint8_t> truth, std::size_t points,
               ThresholdGrid grid) {
  if (scores.size() != truth.size()) throw std::invalid_argument("aup_aur: score and truth sizes differ");
  if (points == 0) throw std::invalid_argument("aup_aur: need at least one threshold");
  const auto positives = static_cast<std::size_t>(std::count_if(truth.begin(), truth.end(), [](auto t) { return t != 0; }));
  if (positives == 0 || positives == truth.size()) {
    throw std::invalid_argument("aup_aur: truth must contain both salient and non-salient cells");
  }
  double precision_sum = 0, recall_sum = 0;
  std::size_t precision_points = 0;
  for (double tau : thresholds(scores, points, grid)) {
    std::size_t predicted = 0, hits = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] > tau) {
        ++predicted;
        hits += truth[j] != 0;
      }
    }
    recall_sum += static_cast<double>(hits) / static_cast<double>(positives);
    if (predicted > 0) {
      precision_sum += static_cast<double>(hits) / static_cast<double>(predicted);
      ++precision_points;
    }
  }
  return {precision_points ? precision_sum / static_cast<double>(precision_points) : 0.0,
          recall_sum / static_cast<double>(points)};
}

double information(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw std::invalid_argument("information: score and truth sizes differ");
  double s = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (truth[j]) s -= std::log(1.0 - clip(scores[j]));
  }
  return s;
}

double entropy(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw std::invalid_argument("entropy: score and truth sizes differ");
  double s = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!truth[j]) continue;
    // 0 ln 0 := 0; the clipped form only matters for logs of exact 0 or 1.
    const double m = scores[j];
    if (m <= 0.0 || m >= 1.0) continue;
    const double c = clip(m);
    s -= c * std::log(c) + (1 - c) * std::log(1 - c);
  }
  return s;
}

GroundTruthReport ground_truth_report(const explain::SaliencyMap& map, const data::TimeSeriesDataset& d,
                                      std::size_t points, ThresholdGrid grid) {
  map.validate();
  if (!d.has_truth()) throw std::invalid_argument("ground_truth_report: dataset has no ground truth");
  if (map.steps != d.steps || map.features != d.features) {
    throw std::invalid_argument("ground_truth_report: map shape does not match the dataset");
  }
  if (map.samples() == 0) throw std::invalid_argument("ground_truth_report: empty saliency map");
  std::vector<std::uint8_t> truth;
  truth.reserve(map.scores.size());
  GroundTruthReport r;
  for (std::size_t s = 0; s < map.samples(); ++s) {
    const auto t = d.truth(map.sample_ids[s]);
    truth.insert(truth.end(), t.begin(), t.end());
    r.information += information(map.sample(s), t);
    r.entropy += entropy(map.sample(s), t);
  }
  const auto n = static_cast<double>(map.samples());
  r.information /= n;
  r.entropy /= n;
  const auto a = aup_aur(map.scores, truth, points, grid);
  r.aup = a.aup;
  r.aur = a.aur;
  return r;
}

std::vector<std::size_t> top_cells(std::span<const double> scores, double fraction) {
  if (!(fraction > 0) || !(fraction < 1)) throw std::invalid_argument("top_cells: fraction must lie in (0, 1)");
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(scores.size())));
  if (k == 0) throw std::invalid_argument("top_cells: fraction selects no cells");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

std::vector<double> substitute_values(std::span<const double> sample, std::size_t T, std::size_t n, Substitution s) {
  std::vector<double> out(T * n, 0.0);
  if (s == Substitution::zeros) return out;
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0;
    for (std::size_t t = 0; t < T; ++t) mean += sample[t * n + i];
    mean /= static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) out[t * n + i] = mean;
  }
  return out;
}

namespace {

// Softmax rows of the model output for a batch: [B * R, p].
std::vector<double> row_probabilities(const nets::Classifier& f, const num::Tensor& x) {
  return num::softmax(f.sequence_logits(x)).to_vector();
}

std::size_t argmax(const double* p, std::size_t k) { return static_cast<std::size_t>(std::max_element(p, p + k) - p); }

}  // namespace

MaskedPredictionReport masked_prediction_metrics(const nets::Classifier& f, const data::TimeSeriesDataset& d,
                                                 const explain::SaliencyMap& map, double fraction,
                                                 Substitution substitution) {
  map.validate();
  if (map.steps != d.steps || map.features != d.features) {
    throw std::invalid_argument("masked_prediction_metrics: map shape does not match the dataset");
  }
  if (map.samples() == 0) throw std::invalid_argument("masked_prediction_metrics: empty saliency map");
  const std::size_t N = map.samples(), T = d.steps, n = d.features, cells = T * n;
  std::vector<double> original(N * cells), top(N * cells), rest(N * cells);
  for (std::size_t s = 0; s < N; ++s) {
    const auto x = d.sample(map.sample_ids[s]);
    const auto sub = substitute_values(x, T, n, substitution);
    const auto chosen = top_cells(map.sample(s), fraction);
    std::vector<std::uint8_t> in_top(cells, 0);
    for (auto c : chosen) in_top[c] = 1;
    for (std::size_t c = 0; c < cells; ++c) {
      original[s * cells + c] = x[c];
      top[s * cells + c] = in_top[c] ? sub[c] : x[c];
      rest[s * cells + c] = in_top[c] ? x[c] : sub[c];
    }
  }
  const num::Shape shape{N, T, n};
  const auto p0 = row_probabilities(f, num::Tensor::from(shape, std::move(original)));
  const auto p_top = row_probabilities(f, num::Tensor::from(shape, std::move(top)));
  const auto p_rest = row_probabilities(f, num::Tensor::from(shape, std::move(rest)));
  const std::size_t R = f.output_rows(T), k = f.classes();
  if (d.labels_per_sample() != R) {
    throw std::invalid_argument("masked_prediction_metrics: model output rows do not match dataset labels");
  }

  MaskedPredictionReport r;
  r.fraction = fraction;
  r.substitution = substitution;
  for (std::size_t s = 0; s < N; ++s) {
    const auto labels = d.labels(map.sample_ids[s]);
    double acc = 0, ce = 0, comp = 0, suff = 0;
    for (std::size_t row = 0; row < R; ++row) {
      const std::size_t off = (s * R + row) * k;
      const std::size_t c = argmax(&p0[off], k);
      acc += argmax(&p_top[off], k) == static_cast<std::size_t>(labels[row]);
      for (std::size_t j = 0; j < k; ++j) {
        if (p0[off + j] > 0) ce -= p0[off + j] * std::log(std::max(p_top[off + j], 1e-300));
      }
      comp += p0[off + c] - p_top[off + c];
      suff += p0[off + c] - p_rest[off + c];
    }
    const auto rows = static_cast<double>(R);
    r.accuracy += acc / rows;
    r.cross_entropy += ce / rows;
    r.comprehensiveness += comp / rows;
    r.sufficiency += suff / rows;
  }
  const auto n_samples = static_cast<double>(N);
  r.accuracy /= n_samples;
  r.cross_entropy /= n_samples;
  r.comprehensiveness /= n_samples;
  r.sufficiency /= n_samples;
  return r;
}

MeanInterval mean_interval(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("mean_interval: need at least two values");
  const auto n = static_cast<double>(v.size());
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return {v.front(), 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(n)};
}

ImportanceSummary aggregate_importance(const explain::SaliencyMap& map) {
  map.validate();
  const std::size_t N = map.samples(), T = map.steps, n = map.features;
  if (N < 2) throw std::invalid_argument("aggregate_importance: need at least two samples");
  ImportanceSummary out;
  std::vector<double> col(N);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < N; ++s) {
      const auto v = map.sample(s);
      double m = 0;
      for (std::size_t t = 0; t < T; ++t) m += v[t * n + i];
      col[s] = m / static_cast<double>(T);
    }
    out.per_feature.push_back(mean_interval(col));
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < N; ++s) {
      const auto v = map.sample(s);
      col[s] = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(t * n),
                               v.begin() + static_cast<std::ptrdiff_t>((t + 1) * n), 0.0) /
               static_cast<double>(n);
    }
    out.per_time.push_back(mean_interval(col));
  }
  return out;
}

std::vector<CurvePoint> positive_rate_masking_curve(const nets::Classifier& f, const data::TimeSeriesDataset& d,
                                                    std::span<const std::size_t> ks, bool mask_last) {
  if (f.classes() != 2 || f.output_rows(d.steps) != 1) {
    throw std::invalid_argument("positive_rate_masking_curve: needs a binary sequence classifier");
  }
  const auto p = row_probabilities(f, d.all());
  std::vector<std::size_t> positive;
  for (std::size_t s = 0; s < d.samples; ++s) {
    if (p[s * 2 + 1] > 0.5) positive.push_back(s);
  }
  if (positive.empty()) throw std::invalid_argument("positive_rate_masking_curve: no positive predictions");
  const std::size_t T = d.steps, n = d.features;
  const auto base = d.batch(positive).to_vector();
  std::vector<CurvePoint> out;
  for (auto k : ks) {
    if (k > T) throw std::invalid_argument("positive_rate_masking_curve: k exceeds the series length");
    auto x = base;
    const std::size_t t0 = mask_last ? T - k : 0, t1 = mask_last ? T : k;
    for (std::size_t s = 0; s < positive.size(); ++s)
      for (std::size_t t = t0; t < t1; ++t)
        for (std::size_t i = 0; i < n; ++i) x[(s * T + t) * n + i] = 0.0;
    const auto q = row_probabilities(f, num::Tensor::from({positive.size(), T, n}, std::move(x)));
    std::size_t still = 0;
    for (std::size_t s = 0; s < positive.size(); ++s) still += q[s * 2 + 1] > 0.5;
    out.push_back({k, static_cast<double>(still) / static_cast<double>(positive.size())});
  }
  return out;
}

}  // namespace tempex::metrics

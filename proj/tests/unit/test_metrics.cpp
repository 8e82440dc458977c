#include <doctest.h>

#include <cmath>
#include <random>

#include "support/gradcheck.hpp"
#include "tempex/metrics/metrics.hpp"

using namespace tempex;
using num::Tensor;

namespace {

data::TimeSeriesDataset toy_dataset(std::size_t N, std::size_t T, std::size_t n, std::uint64_t seed) {
  data::TimeSeriesDataset d;
  d.samples = N;
  d.steps = T;
  d.features = n;
  d.x = testing::uniform(N * T * n, -2, 2, seed);
  d.label_kind = data::LabelKind::per_sequence;
  d.y.resize(N);
  for (std::size_t i = 0; i < N; ++i) d.y[i] = static_cast<int>(i % 2);
  return d;
}

std::vector<double> class_probs(const nets::Classifier& f, const std::vector<double>& sample, std::size_t T,
                                std::size_t n) {
  return f.probabilities(Tensor::from({1, T, n}, sample)).to_vector();
}

}  // namespace

TEST_CASE("aup/aur: perfect and all-positive detectors") {
  const std::vector<std::uint8_t> truth{1, 0, 0, 1, 0, 0, 0, 0};
  const std::vector<double> perfect{1, 0, 0, 1, 0, 0, 0, 0};
  auto r = metrics::aup_aur(perfect, truth);
  CHECK(r.aup == 1.0);
  CHECK(r.aur == 1.0);
  const std::vector<double> ones(8, 1.0);
  r = metrics::aup_aur(ones, truth);
  CHECK(r.aur == 1.0);
  CHECK(r.aup == doctest::Approx(0.25));
  CHECK_THROWS_AS(metrics::aup_aur(ones, std::vector<std::uint8_t>(8, 1)), std::invalid_argument);
  CHECK_THROWS_AS(metrics::aup_aur(ones, std::vector<std::uint8_t>(8, 0)), std::invalid_argument);
}

TEST_CASE("aup/aur: random instances match a hand-looped sweep") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scores = testing::uniform(6, 0, 1, seed);
    std::vector<std::uint8_t> truth{1, 0, 0, 1, 1, 0};
    std::shuffle(truth.begin(), truth.end(), std::mt19937_64(seed));
    double p = 0, rec = 0;
    int valid = 0;
    for (int k = 1; k <= 100; ++k) {
      const double tau = k / 101.0;
      int tp = 0, pred = 0;
      for (int j = 0; j < 6; ++j) {
        if (scores[j] > tau) {
          ++pred;
          tp += truth[j];
        }
      }
      rec += tp / 3.0;
      if (pred > 0) {
        p += static_cast<double>(tp) / pred;
        ++valid;
      }
    }
    const auto r = metrics::aup_aur(scores, truth);
    CHECK(r.aup == doctest::Approx(p / valid).epsilon(1e-12));
    CHECK(r.aur == doctest::Approx(rec / 100).epsilon(1e-12));
  }
}

TEST_CASE("aup/aur: the quantile grid ignores monotone rescaling") {
  const auto scores = testing::uniform(40, 0, 1, 3);
  std::vector<std::uint8_t> truth(40, 0);
  for (std::size_t j = 0; j < 40; j += 3) truth[j] = 1;
  std::vector<double> squashed(scores);
  for (auto& v : squashed) v = 0.2 + 0.1 * v * v;
  const auto a = metrics::aup_aur(scores, truth, 100, metrics::ThresholdGrid::quantile);
  const auto b = metrics::aup_aur(squashed, truth, 100, metrics::ThresholdGrid::quantile);
  CHECK(a.aup == doctest::Approx(b.aup).epsilon(1e-12));
  CHECK(a.aur == doctest::Approx(b.aur).epsilon(1e-12));
}

TEST_CASE("information and entropy: closed forms") {
  const std::vector<std::uint8_t> one{1};
  const std::vector<double> half{0.5};
  CHECK(metrics::information(half, one) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(metrics::entropy(half, one) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const std::vector<std::uint8_t> truth{1, 1, 0};
  const std::vector<double> binary{0.0, 1.0, 0.7};
  CHECK(metrics::entropy(binary, truth) == 0.0);
  // m = 0 clips to eps and contributes about eps; m = 1 contributes -ln eps.
  CHECK(metrics::information(binary, truth) == doctest::Approx(-std::log(metrics::kLogEpsilon)).epsilon(1e-6));
  CHECK(metrics::information(std::vector<double>{0.0}, one) < 2e-6);
}

TEST_CASE("information rises with salient scores; entropy peaks at one half") {
  const std::vector<std::uint8_t> truth{1, 1, 0};
  double last_i = -1;
  for (double m = 0.05; m < 1; m += 0.1) {
    const std::vector<double> s{m, 0.3, 0.9};
    const double i = metrics::information(s, truth);
    CHECK(i > last_i);
    last_i = i;
  }
  const std::vector<double> low{0.1, 0.3, 0.9}, mid{0.4, 0.3, 0.9};
  CHECK(metrics::entropy(mid, truth) > metrics::entropy(low, truth));
}

TEST_CASE("ground-truth report pools cells and averages sums over samples") {
  auto d = toy_dataset(3, 2, 2, 1);
  d.true_saliency = {1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1};
  explain::SaliencyMap map{"m", 2, 2, {2, 0}, {0.9, 0.2, 0.5, 0.6, 0.8, 0.1, 0.3, 0.4}, {}, {}};
  const auto r = metrics::ground_truth_report(map, d);
  const std::vector<std::uint8_t> pooled{0, 0, 1, 1, 1, 0, 0, 0};
  const auto a = metrics::aup_aur(map.scores, pooled);
  CHECK(r.aup == a.aup);
  CHECK(r.aur == a.aur);
  const double info = (-std::log(1 - 0.5) - std::log(1 - 0.6) - std::log(1 - 0.8)) / 2;
  CHECK(r.information == doctest::Approx(info).epsilon(1e-12));
}

TEST_CASE("top cells: floor count and ties in index order") {
  const std::vector<double> s{0.5, 0.9, 0.5, 0.1, 0.5};
  CHECK(metrics::top_cells(s, 0.4) == std::vector<std::size_t>{1, 0});
  CHECK(metrics::top_cells(s, 0.7) == std::vector<std::size_t>{1, 0, 2});
  CHECK_THROWS_AS(metrics::top_cells(s, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(metrics::top_cells(s, 1.0), std::invalid_argument);
}

TEST_CASE("substitution values") {
  const std::vector<double> sample{1, 10, 3, 20, 5, 30};  // T = 3, n = 2
  CHECK(metrics::substitute_values(sample, 3, 2, metrics::Substitution::time_average) ==
        std::vector<double>{3, 20, 3, 20, 3, 20});
  CHECK(metrics::substitute_values(sample, 3, 2, metrics::Substitution::zeros) == std::vector<double>(6, 0.0));
  CHECK(metrics::parse_substitution("average") == metrics::Substitution::time_average);
}

TEST_CASE("masked predictions: hand-computed toy") {
  const auto f = nets::Classifier::init({.input_size = 2, .hidden_size = 3, .readout = nets::Readout::final_step, .seed = 4})
                     .frozen();
  const auto d = toy_dataset(2, 2, 2, 5);
  explain::SaliencyMap map{"m", 2, 2, {0, 1}, {0.9, 0.1, 0.8, 0.2, 0.3, 0.7, 0.6, 0.4}, {}, {}};
  for (auto sub : {metrics::Substitution::zeros, metrics::Substitution::time_average}) {
    const auto r = metrics::masked_prediction_metrics(f, d, map, 0.5, sub);
    double acc = 0, ce = 0, comp = 0, suff = 0;
    for (std::size_t s = 0; s < 2; ++s) {
      const std::vector<double> x(d.x.begin() + s * 4, d.x.begin() + (s + 1) * 4);
      const auto fill = metrics::substitute_values(x, 2, 2, sub);
      const auto top = metrics::top_cells(map.sample(s), 0.5);
      auto masked = x, kept = fill;
      for (auto j : top) {
        masked[j] = fill[j];
        kept[j] = x[j];
      }
      const auto p = class_probs(f, x, 2, 2), q = class_probs(f, masked, 2, 2), k = class_probs(f, kept, 2, 2);
      const std::size_t c = p[1] > p[0] ? 1 : 0;
      acc += (q[1] > q[0] ? 1 : 0) == d.y[s];
      ce -= p[0] * std::log(q[0]) + p[1] * std::log(q[1]);
      comp += p[c] - q[c];
      suff += p[c] - k[c];
    }
    CHECK(r.accuracy == doctest::Approx(acc / 2));
    CHECK(r.cross_entropy == doctest::Approx(ce / 2).epsilon(1e-9));
    CHECK(r.comprehensiveness == doctest::Approx(comp / 2).epsilon(1e-9));
    CHECK(r.sufficiency == doctest::Approx(suff / 2).epsilon(1e-9));
  }
  CHECK_THROWS_AS(metrics::masked_prediction_metrics(f, d, map, 0.1, metrics::Substitution::zeros), std::invalid_argument);
}

TEST_CASE("mean interval: degenerate cases and a bootstrap oracle") {
  const std::vector<double> same(10, 0.3);
  CHECK(metrics::mean_interval(same).half_width == 0.0);
  const std::vector<double> pair{0.0, 1.0};
  CHECK(metrics::mean_interval(pair).mean == 0.5);
  CHECK_THROWS(metrics::mean_interval(std::vector<double>{1.0}));

  const auto values = testing::uniform(400, 0, 1, 21);
  const auto ci = metrics::mean_interval(values);
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(2000);
  for (auto& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double boot = (means[1949] - means[49]) / 2;
  CHECK(std::abs(ci.half_width - boot) < 0.2 * boot);
}

TEST_CASE("aggregate importance: per-feature and per-time means") {
  explain::SaliencyMap map{"m", 2, 2, {0, 1}, {0, 1, 0, 1, 1, 1, 0, 1}, {}, {}};
  const auto s = metrics::aggregate_importance(map);
  REQUIRE(s.per_feature.size() == 2);
  REQUIRE(s.per_time.size() == 2);
  CHECK(s.per_feature[0].mean == doctest::Approx(0.25));
  CHECK(s.per_feature[1].mean == doctest::Approx(1.0));
  CHECK(s.per_feature[1].half_width == 0.0);
  CHECK(s.per_time[0].mean == doctest::Approx(0.75));
}

TEST_CASE("positive-rate curve: k = 0 and k = T") {
  const auto f = nets::Classifier::init({.input_size = 2, .hidden_size = 3, .readout = nets::Readout::final_step, .seed = 9})
                     .frozen();
  auto d = toy_dataset(40, 6, 2, 10);
  const std::vector<std::size_t> ks{0, 6};
  const auto p0 = f.probabilities(Tensor::zeros({1, 6, 2})).to_vector();
  const auto probe = f.probabilities(d.all()).to_vector();
  bool any_positive = false;
  for (std::size_t s = 0; s < d.samples; ++s) any_positive = any_positive || probe[s * 2 + 1] > 0.5;
  if (!any_positive) {
    CHECK_THROWS_AS(metrics::positive_rate_masking_curve(f, d, ks, false), std::invalid_argument);
    return;
  }
  for (bool last : {false, true}) {
    const auto curve = metrics::positive_rate_masking_curve(f, d, ks, last);
    CHECK(curve[0].positive_rate == 1.0);
    CHECK(curve[1].positive_rate == (p0[1] > 0.5 ? 1.0 : 0.0));
  }
}

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "support/gradcheck.hpp"
#include "tempex/datagen/hmm.hpp"
#include "tempex/explainers/explainers.hpp"
#include "tempex/numerics/adam.hpp"

using namespace tempex;
using num::Tensor;

namespace {

nets::Classifier small_model(std::size_t n, nets::Readout readout = nets::Readout::per_timestep, std::uint64_t seed = 3) {
  return nets::Classifier::init({.input_size = n, .hidden_size = 4, .classes = 2, .readout = readout, .seed = seed}).frozen();
}

Tensor random_batch(std::size_t B, std::size_t T, std::size_t n, std::uint64_t seed) {
  return Tensor::from({B, T, n}, testing::uniform(B * T * n, -2, 2, seed));
}

explain::LearnedConfig quick(std::size_t iterations = 60) {
  explain::LearnedConfig c;
  c.iterations = iterations;
  c.seed = 17;
  return c;
}

// f_c of one sample computed from the probabilities, c = argmax per row.
double brute_score(const nets::Classifier& f, const std::vector<double>& sample, std::size_t T, std::size_t n,
                   const std::vector<std::size_t>& classes) {
  const auto p = f.probabilities(Tensor::from({1, T, n}, sample)).to_vector();
  double s = 0;
  for (std::size_t r = 0; r < classes.size(); ++r) s += p[r * 2 + classes[r]];
  return s;
}

nets::Classifier trained_hmm_model() {
  data::HmmConfig cfg;
  cfg.series = 120;
  cfg.steps = 40;
  cfg.seed = 5;
  const auto ds = data::generate_hmm(cfg);
  return nets::train_classifier(ds, {.input_size = 3, .hidden_size = 8, .seed = 1}, {.epochs = 4, .lr = 1e-2, .seed = 2})
      .model.frozen();
}

}  // namespace

TEST_CASE("explainers refuse a model with trainable parameters") {
  const auto live = nets::Classifier::init({.input_size = 2, .hidden_size = 3});
  const auto x = random_batch(1, 4, 2, 1);
  CHECK_THROWS_AS(explain::explain_learned(live, x, {}, quick()), explain::ContractError);
  CHECK_THROWS_AS(explain::explain_dynamask(live, x, {}, {}), explain::ContractError);
  CHECK_THROWS_AS(explain::occlusion(live, x, {}), explain::ContractError);
  CHECK_THROWS_AS(explain::integrated_gradients(live, x, {}), explain::ContractError);
}

TEST_CASE("learned explainer: the model is untouched") {
  const auto f = small_model(2);
  const auto before = f.flat_weights();
  explain::explain_learned(f, random_batch(2, 5, 2, 2), {}, quick());
  CHECK(f.flat_weights() == before);
}

TEST_CASE("learned explainer: zero iterations leave the mask at its start") {
  auto c = quick(0);
  c.lambda1 = c.lambda2 = 0;
  c.generator = perturb::GeneratorKind::zero;
  const auto map = explain::explain_learned(small_model(2), random_batch(2, 5, 2, 3), {}, c);
  CHECK(std::all_of(map.scores.begin(), map.scores.end(), [](double v) { return v == 0.5; }));
}

TEST_CASE("learned explainer: a large lambda1 switches the mask off") {
  auto c = quick(500);
  c.lambda1 = 100;
  const auto map = explain::explain_learned(small_model(3), random_batch(3, 8, 3, 4), {}, c);
  double mean = 0;
  for (double v : map.scores) mean += v;
  CHECK(mean / static_cast<double>(map.scores.size()) < 0.05);
}

TEST_CASE("learned explainer: the preservation loss mostly decreases") {
  auto c = quick(300);
  c.keep_history = true;
  c.tolerance = 0;  // run every iteration
  const auto map = explain::explain_learned(small_model(3), random_batch(4, 10, 3, 5), {}, c);
  for (const auto& info : map.info) {
    const auto& h = info.loss_history;
    REQUIRE(h.size() > 10);
    std::size_t down = 0;
    for (std::size_t i = 1; i < h.size(); ++i) down += h[i] <= h[i - 1];
    CHECK(static_cast<double>(down) / static_cast<double>(h.size() - 1) >= 0.95);
  }
}

TEST_CASE("learned explainer: mask stays in the box and scores carry bookkeeping") {
  auto c = quick(100);
  c.mode = explain::Mode::deletion;
  const std::vector<std::size_t> ids{7, 9};
  const auto map = explain::explain_learned(small_model(2), random_batch(2, 6, 2, 6), ids, c);
  CHECK(map.sample_ids == ids);
  CHECK(std::all_of(map.scores.begin(), map.scores.end(), [](double v) { return v >= 0 && v <= 1; }));
  REQUIRE(map.info.size() == 2);
  CHECK(map.info[0].iterations > 0);
  CHECK(map.info[0].loss == doctest::Approx(map.info[0].mask_term + map.info[0].generator_term + map.info[0].fit_term));
}

TEST_CASE("learned explainer: a batch equals one run per sample") {
  const auto f = small_model(2);
  const auto x = random_batch(3, 6, 2, 7);
  const std::vector<std::size_t> ids{4, 5, 6};
  for (auto target : {explain::Target::soft, explain::Target::hard}) {
    auto c = quick(80);
    c.target = target;
    const auto batched = explain::explain_learned(f, x, ids, c);
    for (std::size_t b = 0; b < 3; ++b) {
      const auto row = Tensor::from({1, 6, 2}, {x.values().begin() + b * 12, x.values().begin() + (b + 1) * 12});
      const auto single = explain::explain_learned(f, row, {&ids[b], 1}, c);
      for (std::size_t j = 0; j < 12; ++j) CHECK(single.scores[j] == doctest::Approx(batched.scores[b * 12 + j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("learned explainer: seeded runs are bitwise identical") {
  const auto f = small_model(2);
  const auto x = random_batch(2, 6, 2, 8);
  const auto a = explain::explain_learned(f, x, {}, quick());
  const auto b = explain::explain_learned(f, x, {}, quick());
  CHECK(a.scores == b.scores);
  auto other = quick();
  other.seed = 18;
  CHECK(explain::explain_learned(f, x, {}, other).scores != a.scores);
}

TEST_CASE("learned explainer: a non-finite objective names the iteration") {
  auto x = random_batch(1, 4, 2, 9).to_vector();
  x[3] = std::nan("");
  try {
    explain::explain_learned(small_model(2), Tensor::from({1, 4, 2}, x), {}, quick());
    FAIL("expected DivergenceError");
  } catch (const explain::DivergenceError& e) {
    CHECK(e.iteration() == 0);
  }
}

TEST_CASE("learned explainer: config validation") {
  auto c = quick();
  c.lambda1 = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(explain::parse_mode("deletion") == explain::Mode::deletion);
  CHECK(explain::parse_target(explain::to_string(explain::Target::hard)) == explain::Target::hard);
  CHECK_THROWS_AS(explain::parse_target("fuzzy"), std::invalid_argument);
}

TEST_CASE("area penalty: vecsort and the reference vector") {
  CHECK(num::sort(Tensor::from({1, 3}, {0.3, 0.9, 0.1})).to_vector() == std::vector<double>{0.1, 0.3, 0.9});
  const auto r = explain::area_reference(10, 0.3);
  CHECK(r == std::vector<double>{0, 0, 0, 0, 0, 0, 0, 1, 1, 1});
  const auto matching = Tensor::from({1, 10}, {1, 0, 0, 1, 0, 0, 1, 0, 0, 0});
  CHECK(explain::area_penalty(matching, r).item() == 0.0);
  const auto half = Tensor::full({1, 10}, 0.5);
  CHECK(explain::area_penalty(half, r).item() == doctest::Approx(0.25));
  CHECK_THROWS_AS(explain::area_reference(10, 0.0), std::invalid_argument);
}

TEST_CASE("area penalty: with a = 1 descent drives the mask to ones") {
  const auto r = explain::area_reference(6, 1.0);
  perturb::Mask mask({1, 6}, 0.2);
  num::Adam opt({mask.values()}, {0.05});
  for (int it = 0; it < 300; ++it) {
    opt.zero_grad();
    num::backward(num::sum(explain::area_penalty(mask.values(), r)));
    opt.step();
    mask.project();
  }
  for (double v : mask.values().to_vector()) CHECK(v > 0.99);
}

TEST_CASE("dynamask: scores in the box, deterministic, model untouched") {
  const auto f = small_model(2);
  const auto before = f.flat_weights();
  explain::DynamaskConfig c;
  c.iterations = 50;
  const auto x = random_batch(2, 8, 2, 10);
  const auto a = explain::explain_dynamask(f, x, {}, c);
  CHECK(a.method == "dynamask");
  CHECK(std::all_of(a.scores.begin(), a.scores.end(), [](double v) { return v >= 0 && v <= 1; }));
  CHECK(explain::explain_dynamask(f, x, {}, c).scores == a.scores);
  CHECK(f.flat_weights() == before);
  c.area = 1.5;
  CHECK_THROWS_AS(explain::explain_dynamask(f, x, {}, c), std::invalid_argument);
}

TEST_CASE("occlusion: constant and single-cell score functions") {
  const auto x = random_batch(2, 3, 2, 11);
  const auto constant = explain::occlusion([](const Tensor& v) { return Tensor::full({v.dim(0)}, 0.7); }, x, {});
  CHECK(std::all_of(constant.raw.begin(), constant.raw.end(), [](double v) { return v == 0.0; }));

  // f(x) = x[t = 1, i = 0]
  const auto one_cell = [](const Tensor& v) { return num::reshape(num::slice(num::slice(v, 1, 1, 2), 2, 0, 1), {v.dim(0)}); };
  const auto map = explain::occlusion(one_cell, x, {});
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t j = 0; j < 6; ++j) {
      const double expected = j == 2 ? std::abs(x[b * 6 + 2]) : 0.0;
      CHECK(map.raw[b * 6 + j] == doctest::Approx(expected).epsilon(1e-15));
    }
  }
}

TEST_CASE("occlusion: equals a brute-force loop whenever T * n <= 12") {
  const std::vector<std::pair<std::size_t, std::size_t>> shapes{{1, 2}, {3, 2}, {2, 3}, {4, 3}, {6, 2}, {12, 1}};
  for (auto readout : {nets::Readout::per_timestep, nets::Readout::final_step}) {
    for (auto [T, n] : shapes) {
      const auto f = small_model(n, readout, T * 10 + n);
      const auto x = random_batch(3, T, n, T + n);
      const auto map = explain::occlusion(f, x, {}, 0.25);
      for (std::size_t b = 0; b < 3; ++b) {
        std::vector<double> sample(x.values().begin() + b * T * n, x.values().begin() + (b + 1) * T * n);
        const auto p = f.probabilities(Tensor::from({1, T, n}, sample)).to_vector();
        std::vector<std::size_t> classes(p.size() / 2);
        for (std::size_t r = 0; r < classes.size(); ++r) classes[r] = p[r * 2 + 1] > p[r * 2] ? 1 : 0;
        const double base = brute_score(f, sample, T, n, classes);
        for (std::size_t j = 0; j < T * n; ++j) {
          auto changed = sample;
          changed[j] = 0.25;
          const double expected = std::abs(base - brute_score(f, changed, T, n, classes));
          CHECK(map.raw[b * T * n + j] == doctest::Approx(expected).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("augmented occlusion: a constant reference equals occlusion at that value") {
  const auto f = small_model(2);
  const auto x = random_batch(2, 4, 2, 12);
  data::TimeSeriesDataset ref;
  ref.samples = 3;
  ref.steps = 4;
  ref.features = 2;
  ref.x.assign(24, -0.6);
  ref.y.assign(3, 0);
  const auto aug = explain::augmented_occlusion(f, x, {}, ref, 4, 1);
  const auto occ = explain::occlusion(f, x, {}, -0.6);
  for (std::size_t j = 0; j < aug.raw.size(); ++j) CHECK(aug.raw[j] == doctest::Approx(occ.raw[j]).epsilon(1e-12));

  data::TimeSeriesDataset empty;
  empty.features = 2;
  CHECK_THROWS_AS(explain::augmented_occlusion(f, x, {}, empty), std::invalid_argument);
}

TEST_CASE("augmented occlusion: draws follow the seed") {
  const auto f = small_model(2);
  const auto x = random_batch(2, 4, 2, 13);
  data::TimeSeriesDataset ref;
  ref.samples = 5;
  ref.steps = 4;
  ref.features = 2;
  ref.x = testing::uniform(40, -2, 2, 14);
  ref.y.assign(5, 0);
  const auto a = explain::augmented_occlusion(f, x, {}, ref, 3, 7);
  CHECK(explain::augmented_occlusion(f, x, {}, ref, 3, 7).raw == a.raw);
  CHECK(explain::augmented_occlusion(f, x, {}, ref, 3, 8).raw != a.raw);
}

TEST_CASE("integrated gradients: exact for a linear score") {
  const auto x = random_batch(2, 3, 2, 15);
  const auto w = Tensor::from({3, 2}, testing::uniform(6, -1, 1, 16));
  const auto linear = [&](const Tensor& v) { return num::sum(num::reshape(num::mul(v, w), {v.dim(0), 6}), 1); };
  for (std::size_t steps : {1u, 7u, 50u}) {
    const auto map = explain::integrated_gradients(linear, x, {}, steps);
    for (std::size_t j = 0; j < 12; ++j) CHECK(map.raw[j] == doctest::Approx(x[j] * w[j % 6]).epsilon(1e-12));
  }
  const auto at_baseline = explain::integrated_gradients(linear, Tensor::full({1, 3, 2}, 0.3), {}, 10, 0.3);
  CHECK(std::all_of(at_baseline.raw.begin(), at_baseline.raw.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("integrated gradients: completeness on a trained HMM model") {
  const auto f = trained_hmm_model();
  data::HmmConfig cfg;
  cfg.series = 4;
  cfg.steps = 40;
  cfg.seed = 77;
  const auto x = data::generate_hmm(cfg).all();
  const auto map = explain::integrated_gradients(f, x, {}, 128);
  const auto classes = explain::predicted_classes(f, x);
  const auto fx = explain::target_score(f, x, classes).to_vector();
  const auto f0 = explain::target_score(f, Tensor::zeros(x.shape()), classes).to_vector();
  for (std::size_t b = 0; b < 4; ++b) {
    double total = 0;
    for (std::size_t j = 0; j < map.cells(); ++j) total += map.raw[b * map.cells() + j];
    const double gap = fx[b] - f0[b];
    CHECK(std::abs(total - gap) <= 0.01 * std::abs(gap));
  }
  CHECK(std::all_of(map.scores.begin(), map.scores.end(), [](double v) { return v >= 0 && v <= 1; }));
}

TEST_CASE("saliency map: normalisation, append and CSV round trip") {
  std::vector<double> v{2, 4, 6, 3, 3, 3};
  explain::minmax_normalize(v, 3);
  CHECK(v == std::vector<double>{0, 0.5, 1, 0, 0, 0});

  explain::SaliencyMap a{"occlusion", 2, 1, {3}, {0.25, 1.0}, {}, {}};
  const explain::SaliencyMap b{"occlusion", 2, 1, {8}, {0.125, 0.0}, {}, {}};
  a.append(b);
  CHECK(a.sample_ids == std::vector<std::size_t>{3, 8});
  CHECK_THROWS(a.append({"dynamask", 2, 1, {1}, {0, 0}, {}, {}}));

  const auto path = std::filesystem::temp_directory_path() / "tempex_map_roundtrip.csv";
  explain::write_saliency_csv(a, path);
  const auto back = explain::read_saliency_csv(path, "occlusion");
  CHECK(back.sample_ids == a.sample_ids);
  CHECK(back.scores == a.scores);
  CHECK(back.steps == 2);
  std::filesystem::remove(path);
}

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "tempex/datagen/archive.hpp"
#include "tempex/datagen/csv.hpp"
#include "tempex/datagen/hmm.hpp"
#include "tempex/datagen/icu_like.hpp"
#include "tempex/nets/classifier.hpp"

using namespace tempex;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tempex_test_" + name);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("hmm: truth marks the state's salient feature") {
  auto d = data::generate_hmm({.series = 20, .steps = 50, .seed = 1});
  REQUIRE(d.has_truth());
  for (std::size_t i = 0; i < d.samples; ++i) {
    auto truth = d.truth(i);
    std::size_t marked = 0;
    for (std::size_t t = 0; t < d.steps; ++t) {
      const int s = d.states[i * d.steps + t];
      for (std::size_t f = 0; f < 3; ++f) {
        const bool want = (s == 0) ? f == 1 : f == 2;
        CHECK(static_cast<bool>(truth[t * 3 + f]) == want);
        marked += truth[t * 3 + f];
      }
    }
    CHECK(marked == d.steps);
  }
}

TEST_CASE("hmm: label probability") {
  const std::vector<double> x = {5.0, 0.0, 3.0};
  CHECK(data::hmm_label_probability(x, 0) == doctest::Approx(0.5));
  CHECK(data::hmm_label_probability(x, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))));
}

TEST_CASE("hmm: state occupancy matches the stationary distribution") {
  data::HmmConfig c;
  c.series = 500;
  c.steps = 200;
  c.transition = {{{0.85, 0.15}, {0.05, 0.95}}};
  c.seed = 2;
  auto d = data::generate_hmm(c);
  // Two-state chain: pi_0 = p10 / (p01 + p10).
  const double pi0 = 0.05 / (0.15 + 0.05);
  const double occupancy =
      static_cast<double>(std::count(d.states.begin(), d.states.end(), 0)) / static_cast<double>(d.states.size());
  CHECK(d.states.size() >= 100000);
  CHECK(std::abs(occupancy - pi0) < 0.01);
  CHECK(data::stationary_distribution(c)[0] == doctest::Approx(pi0).epsilon(1e-12));
}

TEST_CASE("hmm: regenerated label probabilities are consistent") {
  auto d = data::generate_hmm({.series = 200, .steps = 100, .seed = 3});
  // Bin steps by the stored Bernoulli parameter and compare with label rates.
  double expected = 0, observed = 0;
  for (std::size_t i = 0; i < d.samples; ++i) {
    auto xs = d.sample(i);
    for (std::size_t t = 0; t < d.steps; ++t) {
      const double p = data::hmm_label_probability(xs.subspan(t * 3, 3), d.states[i * d.steps + t]);
      expected += p;
      observed += d.y[i * d.steps + t];
    }
  }
  const double n = static_cast<double>(d.samples * d.steps);
  CHECK(std::abs(expected - observed) / n < 0.01);
}

TEST_CASE("hmm: seeded determinism and config validation") {
  auto a = data::generate_hmm({.series = 10, .steps = 20, .seed = 4});
  auto b = data::generate_hmm({.series = 10, .steps = 20, .seed = 4});
  auto c = data::generate_hmm({.series = 10, .steps = 20, .seed = 5});
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.x != c.x);

  data::HmmConfig bad;
  bad.covariance[0][1][1] = -1.0;
  CHECK_THROWS_AS(data::generate_hmm(bad), std::invalid_argument);
  data::HmmConfig rows;
  rows.transition[0] = {0.5, 0.6};
  CHECK_THROWS_AS(data::generate_hmm(rows), std::invalid_argument);
}

TEST_CASE("icu-like: defaults and standardization") {
  data::IcuLikeConfig c;
  CHECK(c.steps == 48);
  c.samples = 2100;
  c.seed = 6;
  auto d = data::generate_icu_like(c);
  CHECK(d.samples * d.steps >= 100000);
  CHECK(d.label_kind == data::LabelKind::per_sequence);
  for (std::size_t f = 0; f < d.features; ++f) {
    double s = 0, s2 = 0;
    for (std::size_t k = f; k < d.x.size(); k += d.features) {
      s += d.x[k];
      s2 += d.x[k] * d.x[k];
    }
    const double n = static_cast<double>(d.samples * d.steps);
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(sd - 1.0) < 0.05);
  }
  CHECK_THROWS(data::generate_icu_like(10, 48, 3, 1));
}

TEST_CASE("icu-like: shuffling the planted channels removes the signal") {
  data::IcuLikeConfig c;
  c.samples = 3000;
  c.seed = 8;
  auto d = data::generate_icu_like(c);
  const auto start = c.late_start();
  auto late_score = [&](const data::TimeSeriesDataset& ds) {
    std::vector<double> out(ds.samples, 0.0);
    for (std::size_t i = 0; i < ds.samples; ++i) {
      auto xs = ds.sample(i);
      for (std::size_t k = 0; k < c.informative.size(); ++k) {
        double m = 0;
        for (std::size_t t = start; t < ds.steps; ++t) m += xs[t * ds.features + c.informative[k]];
        out[i] += c.weights[k] * m / static_cast<double>(ds.steps - start);
      }
    }
    return out;
  };
  CHECK(nets::auroc(late_score(d), d.y) > 0.8);

  auto shuffled = d;
  std::vector<std::size_t> perm(d.samples);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  for (std::size_t i = 0; i < d.samples; ++i) {
    for (std::size_t t = 0; t < d.steps; ++t) {
      for (auto f : c.informative) {
        shuffled.x[(i * d.steps + t) * d.features + f] = d.x[(perm[i] * d.steps + t) * d.features + f];
      }
    }
  }
  CHECK(std::abs(nets::auroc(late_score(shuffled), d.y) - 0.5) < 0.05);
}

TEST_CASE("csv: load, forward fill and ragged detection") {
  const auto path = temp_file("load.csv");
  write_file(path,
             "sample_id,time_index,hr,bp,label\n"
             "a,0,1.0,,0\n"
             "a,1,,5,0\n"
             "a,2,,6,0\n"
             "a,3,2.0,,1\n"
             "b,1,3,3,0\n"
             "b,0,4,4,0\n"
             "b,2,5,5,0\n"
             "b,3,6,6,0\n");
  auto d = data::load_csv(path, {});
  CHECK(d.samples == 2);
  CHECK(d.steps == 4);
  CHECK(d.feature_names == std::vector<std::string>{"hr", "bp"});
  CHECK(d.y == std::vector<int>{1, 0});
  CHECK(std::isnan(d.x[1]));

  auto filled = data::impute_forward_fill(d, {0.0, -9.0});
  const std::vector<double> hr_a = {filled.x[0], filled.x[2], filled.x[4], filled.x[6]};
  CHECK(hr_a == std::vector<double>{1.0, 1.0, 1.0, 2.0});
  CHECK(filled.x[1] == -9.0);
  // Sample b arrived out of order and is fully observed.
  CHECK(filled.x[8] == 4.0);
  CHECK(filled.x[10] == 3.0);

  auto zero_default = data::impute_forward_fill(d);
  CHECK(zero_default.x[1] == 0.0);

  auto again = data::impute_forward_fill(filled);
  CHECK(again.x == filled.x);

  write_file(path,
             "sample_id,time_index,hr,label\n"
             "a,0,1,0\na,1,1,0\n"
             "b,0,1,0\nb,2,1,0\n"
             "c,0,1,0\n");
  try {
    (void)data::load_csv(path, {});
    FAIL("expected ragged error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(" b") != std::string::npos);
    CHECK(msg.find(" c") != std::string::npos);
    CHECK(msg.find(" a") == std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("archive round trip") {
  auto d = data::generate_hmm({.series = 5, .steps = 12, .seed = 10});
  const auto path = temp_file("archive.tpx.gz");
  data::save_archive(d, path);
  auto back = data::load_archive(path);
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);
  CHECK(back.true_saliency == d.true_saliency);
  CHECK(back.states == d.states);
  CHECK(back.feature_names == d.feature_names);
  CHECK(back.seed == d.seed);

  write_file(path, "not an archive");
  CHECK_THROWS(data::load_archive(path));
  std::filesystem::remove(path);
}

TEST_CASE("split and seeds") {
  auto s = data::split_indices(10, 0.2, 1);
  CHECK(s.test.size() == 2);
  CHECK(s.train.size() == 8);
  auto again = data::split_indices(10, 0.2, 1);
  CHECK(s.test == again.test);
  CHECK(data::derive_seed(1, 2) != data::derive_seed(1, 3));
}

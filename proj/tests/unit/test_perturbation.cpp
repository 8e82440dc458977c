#include <doctest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "tempex/numerics/adam.hpp"
#include "tempex/perturbation/perturbation.hpp"

using namespace tempex;
using num::Tensor;

namespace {

// Direct evaluation of the truncated, renormalised Gaussian weights.
std::vector<double> kernel_oracle(std::size_t steps, std::size_t t, double sigma) {
  std::vector<double> w(steps, 0.0);
  if (sigma == 0) {
    w[t] = 1;
    return w;
  }
  double total = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double d = static_cast<double>(s) - static_cast<double>(t);
    if (std::abs(d) > 4 * sigma) continue;
    w[s] = std::exp(-d * d / (2 * sigma * sigma));
    total += w[s];
  }
  for (auto& v : w) v /= total;
  return w;
}

Tensor series(std::vector<double> v) {
  const auto T = v.size();
  return Tensor::from({T, 1}, std::move(v));
}

}  // namespace

TEST_CASE("blur kernel: normalised and equal to the direct formula") {
  for (double sigma : {0.0, 0.3, 1.0, 1.7, 2.0, 5.0}) {
    for (std::size_t t : {0u, 3u, 9u}) {
      const auto w = perturb::blur_kernel(10, t, sigma);
      const auto expected = kernel_oracle(10, t, sigma);
      double total = 0;
      for (std::size_t s = 0; s < w.size(); ++s) {
        total += w[s];
        CHECK(w[s] == doctest::Approx(expected[s]).epsilon(1e-12));
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("gaussian blur: m = 1 keeps x, m = 0 applies the widest kernel") {
  const std::vector<double> xs{0.5, -1.0, 2.0, 3.0, -0.5, 1.5, 0.0};
  const auto x = series(xs);
  CHECK(perturb::gaussian_blur(x, Tensor::ones({7, 1}), 2.0).to_vector() == xs);

  const auto blurred = perturb::gaussian_blur(x, Tensor::zeros({7, 1}), 2.0).to_vector();
  for (std::size_t t = 0; t < 7; ++t) {
    const auto w = kernel_oracle(7, t, 2.0);
    double expected = 0;
    for (std::size_t s = 0; s < 7; ++s) expected += w[s] * xs[s];
    CHECK(blurred[t] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("window averages on a ramp") {
  const auto x = series({1, 2, 3, 4, 5});
  const std::vector<double> centred{1.5, 2.0, 3.0, 4.0, 4.5};
  const std::vector<double> trailing{1.0, 1.5, 2.5, 3.5, 4.5};
  const auto c = perturb::window_average(x, 1).to_vector();
  const auto p = perturb::past_window_average(x, 1).to_vector();
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(c[t] == doctest::Approx(centred[t]));
    CHECK(p[t] == doctest::Approx(trailing[t]));
  }
  CHECK(perturb::window_average(x, 0).to_vector() == x.to_vector());
}

TEST_CASE("window perturbation: m blends x with the average") {
  const auto x = series({1, 2, 3, 4, 5});
  const perturb::FixedPerturbationConfig cfg{perturb::FixedKind::window_average, 1, 2.0};
  CHECK(perturb::apply_fixed(x, Tensor::ones({5, 1}), cfg).to_vector() == x.to_vector());
  const auto mixed = perturb::apply_fixed(x, Tensor::full({5, 1}, 0.25), cfg).to_vector();
  CHECK(mixed[0] == doctest::Approx(0.25 * 1 + 0.75 * 1.5));
}

TEST_CASE("gaussian blur: gradients in x and m match finite differences") {
  // sigma = 0.5 (1 - m) with m in [0.1, 0.4] keeps the kernel radius at 1.
  const auto m0 = testing::uniform(4 * 2, 0.1, 0.4, 5);
  auto x = testing::random_param({4, 2}, 1);
  auto m = Tensor::parameter({4, 2}, m0);
  const auto loss = [](const std::vector<Tensor>& v) { return testing::probe(perturb::gaussian_blur(v[0], v[1], 0.5)); };
  CHECK(testing::gradcheck(loss, {x, m}) < 1e-4);

  // Batched input with a wider kernel.
  auto xb = testing::random_param({2, 6, 2}, 2);
  auto mb = Tensor::parameter({2, 6, 2}, testing::uniform(24, 0.45, 0.7, 6));  // 4 sigma in (2.4, 4.4)
  const auto loss_b = [](const std::vector<Tensor>& v) { return testing::probe(perturb::gaussian_blur(v[0], v[1], 2.0)); };
  CHECK(testing::gradcheck(loss_b, {xb, mb}) < 1e-4);
}

TEST_CASE("learned perturbation: endpoints are exact") {
  const auto x = Tensor::from({2, 5, 3}, testing::uniform(30, -2, 2, 3));
  const std::vector<std::uint64_t> seeds{11, 12};
  const auto gen = perturb::PerturbationGenerator::init(perturb::GeneratorKind::bidirectional, 3, seeds);
  const auto nn = gen(x);
  CHECK(perturb::apply_learned(x, Tensor::ones(x.shape()), gen).to_vector() == x.to_vector());
  CHECK(perturb::apply_learned(x, Tensor::zeros(x.shape()), gen).to_vector() == nn.to_vector());
}

TEST_CASE("learned perturbation: gradients in m and generator parameters") {
  for (auto kind : {perturb::GeneratorKind::unidirectional, perturb::GeneratorKind::bidirectional}) {
    const auto x = Tensor::from({2, 4, 2}, testing::uniform(16, -1, 1, 4));
    const std::vector<std::uint64_t> seeds{3, 4};
    const auto gen = perturb::PerturbationGenerator::init(kind, 2, seeds);
    auto leaves = gen.parameters();
    leaves.push_back(Tensor::parameter(x.shape(), testing::uniform(16, 0.1, 0.9, 8)));
    const auto loss = [&](const std::vector<Tensor>& v) {
      return testing::probe(perturb::apply_learned(x, v.back(), gen));
    };
    CHECK(testing::gradcheck(loss, leaves) < 1e-4);
  }
}

TEST_CASE("generator: a batch row equals a generator built for that row alone") {
  const auto x = Tensor::from({3, 6, 2}, testing::uniform(36, -2, 2, 9));
  const std::vector<std::uint64_t> seeds{101, 202, 303};
  const auto batched = perturb::PerturbationGenerator::init(perturb::GeneratorKind::bidirectional, 2, seeds)(x).to_vector();
  for (std::size_t b = 0; b < 3; ++b) {
    const std::uint64_t seed = seeds[b];
    const auto single = perturb::PerturbationGenerator::init(perturb::GeneratorKind::bidirectional, 2, {&seed, 1});
    const auto row = Tensor::from({1, 6, 2}, {x.values().begin() + b * 12, x.values().begin() + (b + 1) * 12});
    const auto out = single(row).to_vector();
    for (std::size_t j = 0; j < 12; ++j) CHECK(out[j] == doctest::Approx(batched[b * 12 + j]).epsilon(1e-12));
  }
}

TEST_CASE("generator: the zero kind has no parameters and outputs zeros") {
  const std::vector<std::uint64_t> seeds{1};
  const auto gen = perturb::PerturbationGenerator::init(perturb::GeneratorKind::zero, 3, seeds);
  CHECK(gen.parameters().empty());
  const auto out = gen(Tensor::ones({1, 4, 3})).to_vector();
  CHECK(std::all_of(out.begin(), out.end(), [](double v) { return v == 0.0; }));
  CHECK_THROWS(gen(Tensor::ones({2, 4, 3})));
}

TEST_CASE("mask: projection keeps every entry in [0, 1] after each step") {
  perturb::Mask mask({2, 5, 3});
  num::Adam opt({mask.values()}, {0.3});
  const auto push = Tensor::from({2, 5, 3}, testing::uniform(30, -5, 5, 12));
  for (int it = 0; it < 50; ++it) {
    opt.zero_grad();
    num::backward(num::sum(num::mul(mask.values(), push)));
    opt.step();
    mask.project();
    REQUIRE(mask.in_box());
  }
  const auto v = mask.values().to_vector();
  CHECK(std::count(v.begin(), v.end(), 0.0) + std::count(v.begin(), v.end(), 1.0) == 30);
}

TEST_CASE("perturbation names round-trip") {
  for (auto k : {perturb::FixedKind::window_average, perturb::FixedKind::past_window_average, perturb::FixedKind::gaussian_blur}) {
    CHECK(perturb::parse_fixed_kind(perturb::to_string(k)) == k);
  }
  for (auto k : {perturb::GeneratorKind::zero, perturb::GeneratorKind::unidirectional, perturb::GeneratorKind::bidirectional}) {
    CHECK(perturb::parse_generator_kind(perturb::to_string(k)) == k);
  }
  CHECK(perturb::parse_generator_kind("bidirectional") == perturb::GeneratorKind::bidirectional);
  CHECK_THROWS_AS(perturb::parse_generator_kind("lstm"), std::invalid_argument);
  CHECK_THROWS_AS((perturb::FixedPerturbationConfig{perturb::FixedKind::gaussian_blur, 2, -1.0}.validate()),
                  std::invalid_argument);
}

#include <doctest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "tempex/numerics/adam.hpp"
#include "tempex/numerics/ops.hpp"

using namespace tempex;
using num::Tensor;
using testing::gradcheck;
using testing::probe;
using testing::random_param;

namespace {
constexpr double kGradTol = 1e-4;

double check_unary(Tensor (*op)(const Tensor&), double lo, double hi, std::uint64_t seed) {
  return gradcheck([op](const auto& p) { return probe(op(p[0])); },
                   {random_param({3, 4}, seed, lo, hi)});
}
}  // namespace

TEST_CASE("forward examples") {
  CHECK(num::sigmoid(Tensor::scalar(0)).item() == doctest::Approx(0.5));
  CHECK(num::l1_norm(Tensor::from({3}, {1, -2, 3})).item() == doctest::Approx(6.0));
  CHECK(num::cross_entropy_with_logits(Tensor::from({1}, {0.0}), Tensor::from({1}, {1.0})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // Two-class soft target with a uniform prediction.
  CHECK(num::cross_entropy_with_logits(Tensor::from({2}, {0.3, 0.3}), Tensor::from({2}, {0.0, 1.0}))
            .item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("backward examples") {
  auto x = Tensor::parameter({1}, {0.0});
  num::backward(num::sum(num::sigmoid(x)));
  CHECK(x.grad()[0] == doctest::Approx(0.25));

  auto y = Tensor::parameter({2}, {2.0, -3.0});
  num::backward(num::l1_norm(y));
  CHECK(y.grad()[0] == 1.0);
  CHECK(y.grad()[1] == -1.0);
}

TEST_CASE("backward contract") {
  auto x = Tensor::parameter({2}, {1.0, 2.0});
  CHECK_THROWS(num::backward(num::mul(x, x)));
  CHECK_THROWS(num::backward(Tensor::scalar(1.0)));

  auto detached = x.detach();
  auto used = Tensor::parameter({2}, {0.5, 0.5});
  num::backward(num::sum(num::mul(detached, used)));
  CHECK_FALSE(x.has_grad());
  CHECK(used.has_grad());
  CHECK_THROWS((void)x.grad());
}

TEST_CASE("errors name shapes and domains") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({4});
  try {
    (void)num::add(a, b);
    FAIL("expected ShapeError");
  } catch (const num::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
  CHECK_THROWS_AS(num::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), num::ShapeError);
  CHECK_THROWS_AS(num::log(Tensor::from({2}, {1.0, 0.0})), num::DomainError);
  CHECK_THROWS_AS(num::div(Tensor::ones({2}), Tensor::from({2}, {1.0, 0.0})), num::DomainError);
}

TEST_CASE("gradient check: elementwise primitives") {
  CHECK(check_unary(num::sigmoid, -2, 2, 1) < kGradTol);
  CHECK(check_unary(num::tanh, -2, 2, 2) < kGradTol);
  CHECK(check_unary(num::exp, -2, 2, 3) < kGradTol);
  CHECK(check_unary(num::log, 0.2, 2, 4) < kGradTol);
  CHECK(check_unary(num::abs, 0.1, 2, 5) < kGradTol);
  CHECK(check_unary(num::abs, -2, -0.1, 6) < kGradTol);
  CHECK(check_unary(num::square, -2, 2, 7) < kGradTol);
  CHECK(check_unary(num::one_minus, -2, 2, 8) < kGradTol);
  CHECK(check_unary(num::softmax, -2, 2, 9) < kGradTol);
  CHECK(check_unary(num::log_softmax, -2, 2, 10) < kGradTol);
  CHECK(check_unary(num::sort, -2, 2, 11) < kGradTol);
  CHECK(gradcheck([](const auto& p) { return probe(num::scale(p[0], -1.7) + 0.3); },
                  {random_param({5}, 12)}) < kGradTol);
}

TEST_CASE("gradient check: binary primitives with broadcasting") {
  auto lhs = [] { return random_param({3, 4}, 20); };
  CHECK(gradcheck([](const auto& p) { return probe(p[0] + p[1]); }, {lhs(), random_param({4}, 21)}) <
        kGradTol);
  CHECK(gradcheck([](const auto& p) { return probe(p[0] - p[1]); }, {lhs(), random_param({3, 1}, 22)}) <
        kGradTol);
  CHECK(gradcheck([](const auto& p) { return probe(p[0] * p[1]); }, {lhs(), random_param({3, 4}, 23)}) <
        kGradTol);
  CHECK(gradcheck([](const auto& p) { return probe(num::div(p[0], p[1])); },
                  {lhs(), random_param({4}, 24, 0.5, 2)}) < kGradTol);
  CHECK(gradcheck([](const auto& p) { return num::mse(p[0], p[1]); }, {lhs(), random_param({3, 4}, 25)}) <
        kGradTol);
}

TEST_CASE("gradient check: matmul") {
  CHECK(gradcheck([](const auto& p) { return probe(num::matmul(p[0], p[1])); },
                  {random_param({2, 3, 4}, 30), random_param({4, 5}, 31)}) < kGradTol);
  CHECK(gradcheck([](const auto& p) { return probe(num::batched_matmul(p[0], p[1])); },
                  {random_param({2, 3, 4}, 32), random_param({2, 4, 2}, 33)}) < kGradTol);
}

TEST_CASE("gradient check: reductions and shape ops") {
  auto x = [] { return random_param({2, 3, 4}, 40); };
  CHECK(gradcheck([](const auto& p) { return num::sum(num::square(p[0])); }, {x()}) < kGradTol);
  CHECK(gradcheck([](const auto& p) { return num::mean(num::exp(p[0])); }, {x()}) < kGradTol);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    CHECK(gradcheck([axis](const auto& p) { return probe(num::sum(p[0], axis)); }, {x()}) < kGradTol);
    CHECK(gradcheck([axis](const auto& p) { return probe(num::mean(p[0], axis)); }, {x()}) < kGradTol);
    CHECK(gradcheck([axis](const auto& p) { return probe(num::flip(p[0], axis)); }, {x()}) < kGradTol);
    CHECK(gradcheck([axis](const auto& p) { return probe(num::slice(p[0], axis, 1, 2)); }, {x()}) <
          kGradTol);
    CHECK(gradcheck([axis](const auto& p) { return probe(num::concatenate({p[0], p[1]}, axis)); },
                    {x(), random_param({2, 3, 4}, 41)}) < kGradTol);
  }
  CHECK(gradcheck([](const auto& p) { return probe(num::reshape(p[0], {6, 4})); }, {x()}) < kGradTol);
  CHECK(gradcheck([](const auto& p) { return num::l1_norm(p[0]); }, {random_param({5}, 42, 0.1, 2)}) <
        kGradTol);
}

TEST_CASE("gradient check: cross entropy") {
  // Soft targets over three classes.
  auto target = Tensor::from({2, 3}, {0.2, 0.5, 0.3, 0.0, 1.0, 0.0});
  CHECK(gradcheck([&](const auto& p) { return num::sum(num::cross_entropy_with_logits(p[0], target)); },
                  {random_param({2, 3}, 50)}) < kGradTol);
  // Binary single-logit form.
  auto bt = Tensor::from({4, 1}, {0.0, 1.0, 0.3, 0.9});
  CHECK(gradcheck([&](const auto& p) { return num::sum(num::cross_entropy_with_logits(p[0], bt)); },
                  {random_param({4, 1}, 51)}) < kGradTol);
}

TEST_CASE("gradient check: composite graph") {
  auto loss = [](const auto& p) {
    auto h = num::tanh(num::matmul(p[0], p[1]) + p[2]);
    auto s = num::softmax(num::concatenate({h, num::sigmoid(h)}, 1));
    return num::mean(num::log(s + 0.1)) + num::l1_norm(num::clamp(p[0], -1.5, 1.5)) * 0.01;
  };
  CHECK(gradcheck(loss, {random_param({3, 4}, 60, -1.4, 1.4), random_param({4, 2}, 61),
                         random_param({2}, 62)}) < kGradTol);
}

TEST_CASE("clamp gradient is identity inside and zero outside") {
  auto x = Tensor::parameter({4}, {-2.0, 0.2, 0.7, 1.5});
  num::backward(num::sum(num::clamp(x, 0.0, 1.0)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("chain consistency: unrolled recurrence vs flattened expression") {
  // h_{t+1} = tanh(a * h_t + b * u_t), unrolled node by node versus built in
  // one pass from the full input vector with slices.
  auto u_vals = testing::uniform(10, -1, 1, 70);
  auto unrolled = [&](const std::vector<Tensor>& p) {
    Tensor h = Tensor::scalar(0.0);
    for (std::size_t t = 0; t < 10; ++t) {
      h = num::tanh(num::mul(p[0], h) + num::mul(p[1], Tensor::scalar(u_vals[t])));
    }
    return h;
  };
  auto flattened = [&](const std::vector<Tensor>& p) {
    auto u = num::mul(Tensor::from({10}, u_vals), p[1]);
    Tensor h = Tensor::zeros({1});
    for (std::size_t t = 0; t < 10; ++t) h = num::tanh(num::mul(p[0], h) + num::slice(u, 0, t, t + 1));
    return num::sum(h);
  };
  auto a1 = Tensor::parameter({}, {0.7}), b1 = Tensor::parameter({}, {-1.3});
  auto a2 = Tensor::parameter({}, {0.7}), b2 = Tensor::parameter({}, {-1.3});
  auto r1 = unrolled({a1, b1});
  auto r2 = flattened({a2, b2});
  CHECK(r1.item() == doctest::Approx(r2.item()).epsilon(1e-14));
  num::backward(r1);
  num::backward(r2);
  CHECK(std::abs(a1.grad()[0] - a2.grad()[0]) < 1e-10);
  CHECK(std::abs(b1.grad()[0] - b2.grad()[0]) < 1e-10);
}

TEST_CASE("tape records topological order and visits each op once") {
  auto x = Tensor::parameter({2}, {1.0, 2.0});
  auto y = num::exp(x);
  auto z = num::sum(num::mul(y, y));
  num::Tape tape(z);
  CHECK(tape.size() == 3);
  const auto names = tape.op_names();
  REQUIRE(names.size() == 3);
  CHECK(names.front() == "exp");
  CHECK(names.back() == "sum");
  tape.backward();
  CHECK(x.grad()[0] == doctest::Approx(2 * std::exp(2.0)));
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto w = Tensor::parameter({3}, {0.5, -1.0, 2.0});
    num::Adam opt({w}, {0.01});
    for (int i = 0; i < 10; ++i) {
      opt.zero_grad();
      num::backward(num::sum(num::mul(w, Tensor::zeros({3}))));
      opt.step();
    }
    CHECK(std::abs(w[0] - 0.5) < 1e-12);
    CHECK(std::abs(w[1] + 1.0) < 1e-12);
    CHECK(std::abs(w[2] - 2.0) < 1e-12);
  }
  SUBCASE("constant gradient moves against its sign") {
    auto w = Tensor::parameter({2}, {0.0, 0.0});
    num::Adam opt({w}, {0.01});
    for (int i = 0; i < 50; ++i) {
      opt.zero_grad();
      num::backward(num::sum(num::mul(w, Tensor::from({2}, {3.0, -0.5}))));
      opt.step();
    }
    CHECK(w[0] < -0.4);
    CHECK(w[1] > 0.4);
    CHECK(opt.steps() == 50);
  }
  SUBCASE("quadratic bowl converges") {
    auto w = Tensor::parameter({1}, {1.0});
    num::Adam opt({w}, {0.05});
    for (int i = 0; i < 500; ++i) {
      opt.zero_grad();
      num::backward(num::sum(num::square(w)));
      opt.step();
    }
    CHECK(std::abs(w[0]) < 1e-3);
  }
  SUBCASE("missing gradient names the parameter") {
    auto used = Tensor::parameter({1}, {1.0}, "used");
    auto idle = Tensor::parameter({1}, {1.0}, "idle");
    num::Adam opt({used, idle});
    num::backward(num::sum(used));
    try {
      opt.step();
      FAIL("expected error");
    } catch (const std::logic_error& e) {
      CHECK(std::string(e.what()).find("idle") != std::string::npos);
    }
  }
  SUBCASE("row mask freezes inactive rows") {
    auto w = Tensor::parameter({2, 2}, {1.0, 1.0, 1.0, 1.0});
    num::Adam opt({w}, {0.1});
    num::backward(num::sum(w));
    const std::uint8_t active[] = {1, 0};
    opt.step(active);
    CHECK(w[0] < 1.0);
    CHECK(w[2] == 1.0);
    CHECK(w[3] == 1.0);
  }
}

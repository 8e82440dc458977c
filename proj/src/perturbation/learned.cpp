#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "tempex/numerics/ops.hpp"
#include "tempex/perturbation/perturbation.hpp"

namespace tempex::perturb {

Mask::Mask(num::Shape shape, double init) {
  if (init < 0 || init > 1) throw std::invalid_argument("mask: initial value outside [0, 1]");
  const auto n = num::numel(shape);
  values_ = num::Tensor::parameter(std::move(shape), std::vector<double>(n, init), "mask");
}

void Mask::project() {
  for (auto& v : values_.mutable_values()) v = std::clamp(v, 0.0, 1.0);
}

bool Mask::in_box() const {
  const auto v = values_.values();
  return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && x <= 1.0; });
}

std::string to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::zero: return "zero";
    case GeneratorKind::unidirectional: return "gru";
    case GeneratorKind::bidirectional: return "bigru";
  }
  return "?";
}

GeneratorKind parse_generator_kind(const std::string& s) {
  if (s == "zero" || s == "zeros") return GeneratorKind::zero;
  if (s == "gru" || s == "unidirectional") return GeneratorKind::unidirectional;
  if (s == "bigru" || s == "bidirectional") return GeneratorKind::bidirectional;
  throw std::invalid_argument("unknown generator kind '" + s + "'");
}

namespace {

// Stacks per-row tensors of equal shape into one [B, ...] parameter.
num::Tensor stack(const std::vector<num::Tensor>& rows, const std::string& name) {
  num::Shape shape = rows.front().shape();
  shape.insert(shape.begin(), rows.size());
  std::vector<double> v;
  v.reserve(num::numel(shape));
  for (const auto& r : rows) v.insert(v.end(), r.values().begin(), r.values().end());
  return num::Tensor::parameter(std::move(shape), std::move(v), name);
}

nets::GruWeights stack(const std::vector<nets::GruWeights>& rows, const std::string& prefix) {
  auto pick = [&](auto member) {
    std::vector<num::Tensor> out;
    for (const auto& r : rows) out.push_back(r.*member);
    return out;
  };
  return {stack(pick(&nets::GruWeights::w_input), prefix + ".w_input"),
          stack(pick(&nets::GruWeights::w_hidden), prefix + ".w_hidden"),
          stack(pick(&nets::GruWeights::b_input), prefix + ".b_input"),
          stack(pick(&nets::GruWeights::b_hidden), prefix + ".b_hidden")};
}

}  // namespace

PerturbationGenerator PerturbationGenerator::init(GeneratorKind kind, std::size_t features,
                                                  std::span<const std::uint64_t> row_seeds,
                                                  std::size_t hidden) {
  if (features == 0) throw std::invalid_argument("generator: need at least one feature");
  if (row_seeds.empty()) throw std::invalid_argument("generator: need at least one row");
  PerturbationGenerator g;
  g.kind_ = kind;
  g.rows_ = row_seeds.size();
  g.features_ = features;
  if (kind == GeneratorKind::zero) return g;

  const std::size_t H = hidden == 0 ? features : hidden;
  const auto dir = kind == GeneratorKind::bidirectional ? nets::Direction::bidirectional : nets::Direction::forward;
  std::vector<nets::GruWeights> first, second;
  std::vector<num::Tensor> w, b;
  for (auto seed : row_seeds) {
    std::mt19937_64 rng(seed);
    auto p = nets::init_gru(features, H, dir, rng, 0, "generator.gru");
    first.push_back(p.first);
    if (p.second) second.push_back(*p.second);
    const auto width = p.output_size();
    const double k = 1.0 / std::sqrt(static_cast<double>(width));
    std::uniform_real_distribution<double> dist(-k, k);
    std::vector<double> wv(width * features), bv(features);
    for (auto& v : wv) v = dist(rng);
    for (auto& v : bv) v = dist(rng);
    w.push_back(num::Tensor::from({width, features}, std::move(wv)));
    b.push_back(num::Tensor::from({1, features}, std::move(bv)));
  }
  g.gru_.input_size = features;
  g.gru_.hidden_size = H;
  g.gru_.direction = dir;
  g.gru_.first = stack(first, "generator.gru.first");
  if (!second.empty()) g.gru_.second = stack(second, "generator.gru.second");
  g.w_head_ = stack(w, "generator.w_head");
  g.b_head_ = stack(b, "generator.b_head");
  return g;
}

num::Tensor PerturbationGenerator::operator()(const num::Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != rows_ || x.dim(2) != features_) {
    throw num::ShapeError("generator input", x.shape(), {rows_, 0, features_});
  }
  if (kind_ == GeneratorKind::zero) return num::Tensor::zeros(x.shape());
  auto h = nets::gru_forward(x, gru_);
  return num::batched_matmul(h, w_head_) + b_head_;
}

std::vector<num::Tensor> PerturbationGenerator::parameters() const {
  if (kind_ == GeneratorKind::zero) return {};
  auto out = gru_.tensors();
  out.push_back(w_head_);
  out.push_back(b_head_);
  return out;
}

num::Tensor apply_learned(const num::Tensor& x, const num::Tensor& m, const num::Tensor& nn) {
  if (x.shape() != m.shape()) throw num::ShapeError("apply_learned mask", x.shape(), m.shape());
  if (x.shape() != nn.shape()) throw num::ShapeError("apply_learned surrogate", x.shape(), nn.shape());
  return m * x + num::one_minus(m) * nn;
}

num::Tensor apply_learned(const num::Tensor& x, const num::Tensor& m, const PerturbationGenerator& generator) {
  return apply_learned(x, m, generator(x));
}

}  // namespace tempex::perturb

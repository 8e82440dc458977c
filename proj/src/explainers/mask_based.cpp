#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tempex/explainers/explainers.hpp"
#include "tempex/numerics/adam.hpp"
#include "tempex/numerics/ops.hpp"

namespace tempex::explain {

DivergenceError::DivergenceError(const std::string& method, std::size_t iteration)
    : std::runtime_error(method + ": objective became non-finite at iteration " + std::to_string(iteration)),
      iteration_(iteration) {}

std::string to_string(Mode m) { return m == Mode::preservation ? "preservation" : "deletion"; }

Mode parse_mode(const std::string& s) {
  if (s == "preservation") return Mode::preservation;
  if (s == "deletion") return Mode::deletion;
  throw std::invalid_argument("unknown explainer mode '" + s + "'");
}

std::string to_string(Target t) { return t == Target::soft ? "soft" : "hard"; }

Target parse_target(const std::string& s) {
  if (s == "soft") return Target::soft;
  if (s == "hard") return Target::hard;
  throw std::invalid_argument("unknown fit target '" + s + "'");
}

void LearnedConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0) throw std::invalid_argument("learned explainer: lambdas must be non-negative");
  if (!(mask_lr > 0) || !(generator_lr > 0)) throw std::invalid_argument("learned explainer: learning rates must be positive");
  if (patience == 0) throw std::invalid_argument("learned explainer: patience must be positive");
}

void DynamaskConfig::validate() const {
  perturbation.validate();
  if (!(area > 0) || area > 1) throw std::invalid_argument("dynamask: area must lie in (0, 1]");
  if (!(lr > 0)) throw std::invalid_argument("dynamask: learning rate must be positive");
  if (reg_initial < 0 || !(reg_growth > 0)) throw std::invalid_argument("dynamask: bad penalty schedule");
}

namespace {

void require_frozen(const nets::Classifier& f) {
  if (!f.is_frozen()) throw ContractError("explainers require a frozen model (see Classifier::frozen)");
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

void check_input(const num::Tensor& x, const nets::Classifier& f) {
  if (x.rank() != 3 || x.dim(2) != f.input_size()) {
    throw num::ShapeError("explainer input", x.shape(), {0, 0, f.input_size()});
  }
}

// Mean over all cells of each row: [B, T, n] -> [B].
num::Tensor row_mean(const num::Tensor& t) {
  return num::mean(num::reshape(t, {t.dim(0), t.dim(1) * t.dim(2)}), 1);
}

// Target distribution per output row: the model's probabilities, or a
// one-hot on its most probable class.
num::Tensor reference_target(const nets::Classifier& f, const num::Tensor& reference, Target kind) {
  auto p = num::softmax(f.sequence_logits(reference)).to_vector();
  if (kind == Target::hard) {
    const auto k = f.classes();
    for (std::size_t r = 0; r < p.size() / k; ++r) {
      auto row = p.begin() + static_cast<std::ptrdiff_t>(r * k);
      const auto best = std::max_element(row, row + static_cast<std::ptrdiff_t>(k)) - row;
      for (std::size_t j = 0; j < k; ++j) row[static_cast<std::ptrdiff_t>(j)] = static_cast<std::size_t>(best) == j ? 1.0 : 0.0;
    }
  }
  return num::Tensor::from({reference.dim(0), f.output_rows(reference.dim(1)), f.classes()}, std::move(p));
}

num::Tensor fit_term(const nets::Classifier& f, const num::Tensor& phi, const num::Tensor& target) {
  return num::mean(num::cross_entropy_with_logits(f.sequence_logits(phi), target), 1);
}

// Bookkeeping shared by the two mask optimisers.
struct Progress {
  std::vector<std::uint8_t> active;
  std::vector<SampleInfo> info;
  std::vector<std::vector<double>> history;
  std::size_t patience = 0;
  double tolerance = 0;  // <= 0 disables early stopping

  Progress(std::size_t rows, std::size_t patience_, double tolerance_)
      : active(rows, 1), info(rows), history(rows), patience(patience_), tolerance(tolerance_) {}

  [[nodiscard]] bool any() const { return std::any_of(active.begin(), active.end(), [](auto a) { return a != 0; }); }

  // Records the losses of active rows and retires rows that stalled.
  void record(std::span<const double> loss) {
    for (std::size_t b = 0; b < active.size(); ++b) {
      if (!active[b]) continue;
      auto& h = history[b];
      h.push_back(loss[b]);
      if (tolerance > 0 && h.size() > patience && h[h.size() - 1 - patience] - h.back() < tolerance) active[b] = 0;
    }
  }

  void finish(bool keep_history) {
    for (std::size_t b = 0; b < info.size(); ++b) {
      if (keep_history) info[b].loss_history = std::move(history[b]);
    }
  }
};

}  // namespace

SaliencyMap explain_learned(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                            const LearnedConfig& c) {
  c.validate();
  require_frozen(f);
  check_input(x, f);
  const std::size_t B = x.dim(0), T = x.dim(1), n = x.dim(2);
  const auto rows = row_ids(ids, B);
  const auto input = x.detach();

  const bool keep = c.mode == Mode::preservation;
  const auto reference = keep ? input : num::Tensor::zeros(x.shape());
  const auto target = reference_target(f, reference, c.target);

  std::vector<std::uint64_t> seeds(B);
  for (std::size_t b = 0; b < B; ++b) seeds[b] = data::derive_seed(c.seed, rows[b]);
  perturb::Mask mask({B, T, n});
  const auto generator = perturb::PerturbationGenerator::init(c.generator, n, seeds);
  num::Adam mask_opt({mask.values()}, {c.mask_lr});
  const auto gen_params = generator.parameters();
  std::optional<num::Adam> gen_opt;
  if (!gen_params.empty()) gen_opt.emplace(gen_params, num::AdamConfig{c.generator_lr});

  Progress progress(B, c.patience, c.tolerance);
  for (std::size_t it = 0; it < c.iterations && progress.any(); ++it) {
    const auto& m = mask.values();
    const auto nn = generator(input);
    const auto phi = perturb::apply_learned(input, m, nn);
    const auto mask_term = row_mean(num::abs(keep ? m : num::one_minus(m)));
    const auto gen_term = row_mean(num::abs(nn));
    const auto fit = fit_term(f, phi, target);
    const auto per_row = c.lambda1 * mask_term + c.lambda2 * gen_term + fit;
    const auto total = num::sum(per_row);
    if (!std::isfinite(total.item())) throw DivergenceError("learned explainer", it);

    const auto loss = per_row.values();
    for (std::size_t b = 0; b < B; ++b) {
      if (!progress.active[b]) continue;
      progress.info[b] = {it, loss[b], mask_term[b], gen_term[b], fit[b], {}};
    }
    progress.record(loss);
    if (!progress.any()) break;

    mask_opt.zero_grad();
    if (gen_opt) gen_opt->zero_grad();
    num::backward(total);
    mask_opt.step(progress.active);
    if (gen_opt) gen_opt->step(progress.active);
    mask.project();
    for (std::size_t b = 0; b < B; ++b) progress.info[b].iterations += progress.active[b];
    if ((it + 1) % 100 == 0) spdlog::debug("learned explainer iteration {} loss {:.6f}", it + 1, total.item() / B);
  }
  progress.finish(c.keep_history);

  SaliencyMap out;
  out.method = "learned";
  out.steps = T;
  out.features = n;
  out.sample_ids = rows;
  out.scores = mask.values().to_vector();
  out.info = std::move(progress.info);
  return out;
}

std::vector<double> area_reference(std::size_t cells, double area) {
  if (!(area > 0) || area > 1) throw std::invalid_argument("area_reference: area must lie in (0, 1]");
  const auto ones = static_cast<std::size_t>(std::lround(area * static_cast<double>(cells)));
  std::vector<double> r(cells, 0.0);
  std::fill(r.end() - static_cast<std::ptrdiff_t>(std::min(ones, cells)), r.end(), 1.0);
  return r;
}

num::Tensor area_penalty(const num::Tensor& m, std::span<const double> reference) {
  if (m.rank() != 2 || m.dim(1) != reference.size()) {
    throw num::ShapeError("area_penalty", m.shape(), {0, reference.size()});
  }
  const auto r = num::Tensor::from({reference.size()}, {reference.begin(), reference.end()});
  return num::mean(num::square(num::sort(m) - r), 1);
}

SaliencyMap explain_dynamask(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                             const DynamaskConfig& c) {
  c.validate();
  require_frozen(f);
  check_input(x, f);
  const std::size_t B = x.dim(0), T = x.dim(1), n = x.dim(2);
  const auto rows = row_ids(ids, B);
  const auto input = x.detach();
  const auto target = reference_target(f, input, c.target);
  const auto reference = area_reference(T * n, c.area);

  perturb::Mask mask({B, T, n});
  num::Adam opt({mask.values()}, {c.lr});
  Progress progress(B, 1, 0.0);
  const double growth = c.iterations > 1 ? std::log(c.reg_growth) / static_cast<double>(c.iterations - 1) : 0.0;
  for (std::size_t it = 0; it < c.iterations; ++it) {
    const double weight = c.reg_initial * std::exp(growth * static_cast<double>(it));
    const auto& m = mask.values();
    const auto phi = perturb::apply_fixed(input, m, c.perturbation);
    const auto area = area_penalty(num::reshape(m, {B, T * n}), reference);
    const auto fit = fit_term(f, phi, target);
    const auto per_row = weight * area + fit;
    const auto total = num::sum(per_row);
    if (!std::isfinite(total.item())) throw DivergenceError("dynamask", it);
    for (std::size_t b = 0; b < B; ++b) progress.info[b] = {it + 1, per_row[b], area[b], 0.0, fit[b], {}};
    progress.record(per_row.values());

    opt.zero_grad();
    num::backward(total);
    opt.step();
    mask.project();
  }
  progress.finish(c.keep_history);

  SaliencyMap out;
  out.method = "dynamask";
  out.steps = T;
  out.features = n;
  out.sample_ids = rows;
  out.scores = mask.values().to_vector();
  out.info = std::move(progress.info);
  return out;
}

}  // namespace tempex::explain

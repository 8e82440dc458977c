#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempex/datagen/dataset.hpp"
#include "tempex/explainers/saliency.hpp"
#include "tempex/nets/classifier.hpp"
#include "tempex/perturbation/perturbation.hpp"

// Every explainer takes a batch x: [B, T, n] and the ids of its rows (used
// for seeding and recorded in the output). An empty id list means 0..B-1.
// The model must be frozen (see Classifier::frozen).
namespace tempex::explain {

/// The model handed to an explainer still has trainable parameters.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite objective during mask optimisation.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& method, std::size_t iteration);
  [[nodiscard]] std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

enum class Mode { preservation, deletion };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

/// What the perturbed predictions are fitted to: the reference output
/// distribution itself (soft) or its most probable class (hard).
enum class Target { soft, hard };

std::string to_string(Target t);
Target parse_target(const std::string& s);

struct LearnedConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  Mode mode = Mode::preservation;
  Target target = Target::hard;
  perturb::GeneratorKind generator = perturb::GeneratorKind::bidirectional;
  double mask_lr = 0.01;
  double generator_lr = 0.001;
  std::size_t iterations = 500;
  /// A row stops once its loss drops by less than `tolerance` over
  /// `patience` iterations.
  double tolerance = 1e-6;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  bool keep_history = false;

  void validate() const;
};

/// Jointly learns a mask m and a perturbation generator NN per sample:
///   preservation: l1 * mean|m|     + l2 * mean|NN(x)| + CE(f(x), f(phi))
///   deletion:     l1 * mean|1 - m| + l2 * mean|NN(x)| + CE(f(0), f(phi))
/// with phi = m * x + (1 - m) * NN(x). CE is averaged over the model's
/// output rows. Scores are the final m.
SaliencyMap explain_learned(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                            const LearnedConfig& config);

struct DynamaskConfig {
  perturb::FixedPerturbationConfig perturbation;
  double area = 0.1;
  Target target = Target::hard;
  std::size_t iterations = 500;
  double lr = 0.01;
  /// The area penalty weight grows geometrically from `reg_initial` by a
  /// total factor of `reg_growth` over the run.
  double reg_initial = 0.5;
  double reg_growth = 100.0;
  bool keep_history = false;

  void validate() const;
};

/// Target vector of the area penalty: round((1 - a) * cells) zeros then ones.
std::vector<double> area_reference(std::size_t cells, double area);
/// mean((sort(m) - r_a)^2) per row of m: [B, cells] -> [B].
num::Tensor area_penalty(const num::Tensor& m, std::span<const double> reference);

/// Mask over a fixed perturbation, fitted with CE(f(x), f(phi)) plus the
/// area penalty. Scores are the final m.
SaliencyMap explain_dynamask(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                             const DynamaskConfig& config);

/// Most probable class of each output row: [B * R].
std::vector<std::size_t> predicted_classes(const nets::Classifier& f, const num::Tensor& x);
/// f_c: sum over output rows of the probability of the given class per row.
/// Returns [B]; differentiable in x.
num::Tensor target_score(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> classes);

/// Scalar score per row, [B, T, n] -> [B]. Must be differentiable for IG.
using ScoreFn = std::function<num::Tensor(const num::Tensor&)>;

/// |f_c(x) - f_c(x with one cell set to `baseline`)| for every cell, with c
/// the originally predicted classes. Normalised per sample; raw kept.
SaliencyMap occlusion(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                      double baseline = 0.0);
/// Occlusion of an arbitrary score function.
SaliencyMap occlusion(const ScoreFn& score, const num::Tensor& x, std::span<const std::size_t> ids,
                      double baseline = 0.0);

/// As occlusion, but each cell is replaced by values drawn from that
/// feature's empirical distribution in `reference`, averaged over `draws`.
SaliencyMap augmented_occlusion(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                                const data::TimeSeriesDataset& reference, std::size_t draws = 10,
                                std::uint64_t seed = 0);

/// Midpoint Riemann sum of the path integral of grad f_c from the baseline
/// to x. Raw attributions are kept; scores are |raw| normalised per sample.
SaliencyMap integrated_gradients(const nets::Classifier& f, const num::Tensor& x, std::span<const std::size_t> ids,
                                 std::size_t steps = 50, double baseline = 0.0);
SaliencyMap integrated_gradients(const ScoreFn& score, const num::Tensor& x, std::span<const std::size_t> ids,
                                 std::size_t steps = 50, double baseline = 0.0);

}  // namespace tempex::explain

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempex/datagen/csv.hpp"
#include "tempex/datagen/hmm.hpp"
#include "tempex/datagen/icu_like.hpp"
#include "tempex/explainers/explainers.hpp"
#include "tempex/metrics/metrics.hpp"
#include "tempex/nets/classifier.hpp"

namespace tempex::cli {

enum class ExperimentKind { hmm, icu_like, csv };

std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment(const std::string& s);

/// Method names accepted in `[explainers] methods`:
///   learned, learned_deletion, learned_gru, learned_zero, dynamask,
///   occlusion, augmented_occlusion, integrated_gradients
const std::vector<std::string>& known_methods();

struct CsvSource {
  std::filesystem::path path;
  data::CsvSchema schema;
  std::vector<double> defaults;  // forward-fill fallbacks, one per feature
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::hmm;
  std::string profile = "full";
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::filesystem::path output = "results";
  std::size_t jobs = 1;
  /// Test samples explained per fold (0 = the whole test split).
  std::size_t explain_samples = 0;
  /// Rows optimised together in one batched explanation.
  std::size_t explain_batch = 100;
  bool save_maps = true;

  data::HmmConfig hmm;
  data::IcuLikeConfig icu;
  CsvSource csv;
  double test_fraction = 0.2;

  nets::ClassifierConfig model;
  nets::TrainConfig train;

  std::vector<std::string> methods;
  explain::LearnedConfig learned;
  explain::DynamaskConfig dynamask;
  double occlusion_baseline = 0.0;
  std::size_t occlusion_draws = 10;
  std::size_t ig_steps = 50;

  std::vector<double> fractions;
  std::vector<metrics::Substitution> substitutions;
  bool masked_metrics = false;
  metrics::ThresholdGrid threshold_grid = metrics::ThresholdGrid::uniform;
  std::size_t threshold_points = 100;

  bool lambda_ablation = false;
  std::vector<double> lambda_values{0.01, 0.1, 1.0, 10.0, 100.0};
  std::size_t lambda_folds = 1;
  std::size_t lambda_samples = 100;

  bool temporal_analysis = false;

  /// Throws std::invalid_argument naming the first bad setting.
  void validate() const;
};

/// Defaults for an experiment and profile ("full" or "fast").
ExperimentConfig default_config(ExperimentKind kind, const std::string& profile = "full");

/// Reads an INI file with sections [run], [dataset], [model], [explainers],
/// [explainers.<method>], [metrics] and [ablation]. `run.experiment` and
/// `run.profile` pick the defaults that the remaining keys override.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies "section.key=value" overrides on top of a config.
void apply_overrides(ExperimentConfig& config, const std::map<std::string, std::string>& overrides);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

/// TEMPEX_SEED, when set, replaces the configured seed.
void apply_seed_env(ExperimentConfig& config);

/// One metric value from one fold.
struct ResultRow {
  std::string method;
  std::string metric;
  std::optional<double> fraction;
  std::optional<metrics::Substitution> substitution;
  std::size_t fold = 0;
  double value = 0;
};

struct GridCell {
  double lambda1 = 0;
  double lambda2 = 0;
  std::size_t fold = 0;
  double aup = 0;
  double aur = 0;
};

struct CurveRow {
  std::size_t fold = 0;
  std::string side;  // "first" or "last"
  std::size_t k = 0;
  double positive_rate = 0;
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<ResultRow> rows;
  std::vector<GridCell> grid;
  std::vector<CurveRow> curves;
  std::map<std::string, explain::SaliencyMap> maps;
  double classifier_auroc = 0;
};

/// A stage of a fold failed; the message names fold and stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::size_t fold, const std::string& stage, const std::string& what);
  [[nodiscard]] const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Data for a fold: generated with a fold-specific seed (or loaded from
/// CSV), then split.
struct FoldData {
  data::TimeSeriesDataset train;
  data::TimeSeriesDataset test;
};
FoldData fold_data(const ExperimentConfig& config, std::size_t fold);

/// Runs every configured method on a fold and computes its metrics.
FoldResult run_fold(const ExperimentConfig& config, std::size_t fold);

/// Explains `ids` of `dataset` with a named method, batching by
/// config.explain_batch. Throws std::invalid_argument for unknown names.
explain::SaliencyMap explain_method(const std::string& method, const nets::Classifier& model,
                                    const data::TimeSeriesDataset& dataset, std::span<const std::size_t> ids,
                                    const data::TimeSeriesDataset& reference, const ExperimentConfig& config,
                                    std::uint64_t seed);

struct Summary {
  std::string method;
  std::string metric;
  std::optional<double> fraction;
  std::optional<metrics::Substitution> substitution;
  double mean = 0;
  double std = 0;
  std::size_t folds = 0;
};

/// Mean and sample standard deviation over folds for each
/// (method, metric, fraction, substitution), in first-seen order.
std::vector<Summary> summarize(const std::vector<ResultRow>& rows);

/// Runs all folds (up to `jobs` at a time) and writes the report files into
/// config.output. Refuses an existing non-empty directory unless `force`.
/// Files written so far survive a failing fold; the error is rethrown.
std::vector<FoldResult> run_experiment(const ExperimentConfig& config, bool force);

/// One acceptance-style check against the files of a run directory.
struct Check {
  int criterion = 0;
  std::string description;
  bool passed = false;
  std::string detail;
};

/// Every check the files in `dir` allow (a HMM run without deletion rows
/// yields no deletion check, and so on).
std::vector<Check> evaluate_checks(const std::filesystem::path& dir);

/// Prints the summary tables of a completed run directory and returns the
/// number of checks that failed. Throws std::runtime_error listing the
/// expected files when they are missing.
int report(const std::filesystem::path& dir, std::ostream& out);

// CSV writers, shared by run_experiment and the acceptance harness.
void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
void write_summary_csv(const std::vector<Summary>& summary, const std::filesystem::path& path);
std::vector<Summary> read_summary_csv(const std::filesystem::path& path);

}  // namespace tempex::cli

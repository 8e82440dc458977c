#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tempex/datagen/dataset.hpp"
#include "tempex/explainers/saliency.hpp"
#include "tempex/nets/classifier.hpp"

namespace tempex::metrics {

inline constexpr double kLogEpsilon = 1e-6;

// ---- ground truth ----

enum class ThresholdGrid { uniform, quantile };

std::string to_string(ThresholdGrid g);
ThresholdGrid parse_threshold_grid(const std::string& s);

struct AupAur {
  double aup = 0;
  double aur = 0;
};

/// Sweeps a threshold tau over `points` values; cells with score > tau are
/// predicted salient. AUP and AUR are the mean precision and recall over
/// the thresholds (thresholds predicting nothing are skipped for precision).
/// The uniform grid is k / (points + 1), k = 1..points; the quantile grid
/// places the same levels on the empirical distribution of the scores.
/// Throws std::invalid_argument when truth is all true or all false.
AupAur aup_aur(std::span<const double> scores, std::span<const std::uint8_t> truth, std::size_t points = 100,
               ThresholdGrid grid = ThresholdGrid::uniform);

/// -sum over salient cells of ln(1 - m), m clipped to [eps, 1 - eps].
double information(std::span<const double> scores, std::span<const std::uint8_t> truth);
/// -sum over salient cells of m ln m + (1 - m) ln(1 - m), clipped likewise.
double entropy(std::span<const double> scores, std::span<const std::uint8_t> truth);

struct GroundTruthReport {
  double aup = 0;
  double aur = 0;
  double information = 0;
  double entropy = 0;
};

/// AUP/AUR pooled over every cell of every explained sample; information
/// and entropy are per-sample sums averaged over samples.
GroundTruthReport ground_truth_report(const explain::SaliencyMap& map, const data::TimeSeriesDataset& dataset,
                                      std::size_t points = 100, ThresholdGrid grid = ThresholdGrid::uniform);

// ---- masked predictions ----

enum class Substitution { time_average, zeros };

std::string to_string(Substitution s);
Substitution parse_substitution(const std::string& s);

struct MaskedPredictionReport {
  double accuracy = 0;
  double cross_entropy = 0;
  double comprehensiveness = 0;
  double sufficiency = 0;
  double fraction = 0;
  Substitution substitution = Substitution::time_average;
};

/// Indices of the floor(fraction * cells) highest scores, ties broken by
/// cell order. Throws when that count is zero.
std::vector<std::size_t> top_cells(std::span<const double> scores, double fraction);

/// Replacement value of every cell of one sample under a substitution.
std::vector<double> substitute_values(std::span<const double> sample, std::size_t steps, std::size_t features,
                                      Substitution s);

/// Masks the top `fraction` of each explained sample's cells (the
/// complement for sufficiency) and compares the model's predictions:
///  accuracy          predicted class after masking vs. the dataset labels
///  cross_entropy     CE(original distribution, masked distribution)
///  comprehensiveness p_c(x) - p_c(x with top cells masked)
///  sufficiency       p_c(x) - p_c(x with all but the top cells masked)
/// with c the originally predicted class. Rows are averaged within a
/// sample, then samples are averaged. Sample ids index into `dataset`.
MaskedPredictionReport masked_prediction_metrics(const nets::Classifier& f, const data::TimeSeriesDataset& dataset,
                                                 const explain::SaliencyMap& map, double fraction,
                                                 Substitution substitution);

// ---- aggregation ----

struct MeanInterval {
  double mean = 0;
  double half_width = 0;  // 1.96 * sd / sqrt(N)
};

struct ImportanceSummary {
  std::vector<MeanInterval> per_feature;  // averaged over time, then samples
  std::vector<MeanInterval> per_time;     // averaged over features, then samples
};

/// Normal-approximation 95% interval of the mean. Needs at least 2 values.
MeanInterval mean_interval(std::span<const double> values);

ImportanceSummary aggregate_importance(const explain::SaliencyMap& map);

struct CurvePoint {
  std::size_t k = 0;
  double positive_rate = 0;
};

/// Among samples the model predicts positive (p(class 1) > 0.5), the share
/// still predicted positive after zeroing the first (or last) k steps.
/// Throws when no sample is predicted positive.
std::vector<CurvePoint> positive_rate_masking_curve(const nets::Classifier& f, const data::TimeSeriesDataset& dataset,
                                                    std::span<const std::size_t> ks, bool mask_last);

}  // namespace tempex::metrics

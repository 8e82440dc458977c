#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tempex/datagen/dataset.hpp"

namespace tempex::data {

/// Column layout of an external long-format CSV: one row per (sample, step),
/// an id column, a step column, one column per feature and a label column.
/// Missing feature cells are empty.
struct CsvSchema {
  std::string sample_column = "sample_id";
  std::string time_column = "time_index";
  std::vector<std::string> feature_columns;  // empty: every other column
  std::string label_column = "label";
  LabelKind label_kind = LabelKind::per_sequence;
};

/// Loaded values keep missing cells as NaN; run impute_forward_fill before
/// handing the dataset to a model. Samples are ordered by first appearance.
/// Throws std::runtime_error listing samples whose time indices are not the
/// same contiguous range 0..T-1.
TimeSeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Replaces each missing value by the most recent observed value of the same
/// sample and feature, or by defaults[feature] when nothing was observed yet.
/// An empty `defaults` means 0 for every feature.
TimeSeriesDataset impute_forward_fill(TimeSeriesDataset dataset, const std::vector<double>& defaults = {});

}  // namespace tempex::data

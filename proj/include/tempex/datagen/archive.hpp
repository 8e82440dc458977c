#pragma once

#include <filesystem>

#include "tempex/datagen/dataset.hpp"

namespace tempex::data {

// Dataset archive, gzip-compressed as a whole:
//
//   "TPXDSET1"                      8-byte magic
//   u64 little-endian               header length L
//   L bytes                         JSON header (format, version, samples,
//                                   steps, features, label_kind, seed,
//                                   feature_names, has_truth, has_states)
//   f64[N*T*n]                      x
//   i32[N*T or N]                   y
//   u8[N*T*n]                       true saliency, if has_truth
//   i32[N*T]                        hidden states, if has_states
//
// All numbers little-endian.

void save_archive(const TimeSeriesDataset& dataset, const std::filesystem::path& path);
TimeSeriesDataset load_archive(const std::filesystem::path& path);

}  // namespace tempex::data

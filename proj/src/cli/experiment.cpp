#include "tempex/cli/experiment.hpp"

#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <thread>

#include "svg.hpp"
#include "tempex/datagen/csv.hpp"

namespace tempex::cli {

StageError::StageError(std::size_t fold, const std::string& stage, const std::string& what)
    : std::runtime_error(fmt::format("fold {}: stage '{}' failed: {}", fold, stage, what)), stage_(stage) {}

namespace {

// Seed streams below a fold seed.
enum Stream : std::uint64_t { data_stream = 1, split_stream, model_stream, train_stream, explain_stream };

std::uint64_t fold_seed(const ExperimentConfig& c, std::size_t fold) { return data::derive_seed(c.seed, fold); }

// Runs task(i) for i < count on up to `jobs` threads; rethrows the error of
// the lowest failing index once all tasks are done.
template <typename Task>
void parallel_for(std::size_t count, std::size_t jobs, Task&& task) {
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](std::size_t i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto workers = std::min(std::max<std::size_t>(jobs, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (auto i = next++; i < count; i = next++) run(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <typename Fn>
auto stage(std::size_t fold, const std::string& name, Fn&& fn) {
  spdlog::info("fold {}: {}", fold, name);
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(fold, name, e.what());
  }
}

std::vector<std::size_t> explained_ids(const ExperimentConfig& c, const data::TimeSeriesDataset& test) {
  const auto count = c.explain_samples == 0 ? test.samples : std::min(c.explain_samples, test.samples);
  std::vector<std::size_t> ids(count);
  for (std::size_t i = 0; i < count; ++i) ids[i] = i;
  return ids;
}

double classifier_auroc(const nets::Classifier& f, const data::TimeSeriesDataset& test) {
  const auto p = f.probabilities(test.all()).to_vector();
  std::vector<double> scores(p.size() / 2);
  for (std::size_t r = 0; r < scores.size(); ++r) scores[r] = p[r * 2 + 1];
  return nets::auroc(scores, test.y);
}

void ground_truth_rows(FoldResult& out, const std::string& method, const metrics::GroundTruthReport& r) {
  for (const auto& [name, value] :
       {std::pair{"aup", r.aup}, {"aur", r.aur}, {"information", r.information}, {"entropy", r.entropy}}) {
    out.rows.push_back({method, name, std::nullopt, std::nullopt, out.fold, value});
  }
}

void masked_rows(FoldResult& out, const std::string& method, const metrics::MaskedPredictionReport& r) {
  for (const auto& [name, value] : {std::pair{"accuracy", r.accuracy},
                                    {"cross_entropy", r.cross_entropy},
                                    {"comprehensiveness", r.comprehensiveness},
                                    {"sufficiency", r.sufficiency}}) {
    out.rows.push_back({method, name, r.fraction, r.substitution, out.fold, value});
  }
}

std::vector<std::size_t> curve_steps(std::size_t T) {
  std::vector<std::size_t> ks;
  const auto step = std::max<std::size_t>(T / 8, 1);
  for (std::size_t k = 0; k <= T; k += step) ks.push_back(k);
  ks.push_back(T / 4);
  ks.push_back(T);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

std::string fraction_field(const std::optional<double>& f) { return f ? fmt::format("{}", *f) : std::string{}; }
std::string substitution_field(const std::optional<metrics::Substitution>& s) {
  return s ? metrics::to_string(*s) : std::string{};
}

}  // namespace

FoldData fold_data(const ExperimentConfig& c, std::size_t fold) {
  const auto seed = fold_seed(c, fold);
  data::TimeSeriesDataset all;
  switch (c.experiment) {
    case ExperimentKind::hmm: {
      auto cfg = c.hmm;
      cfg.seed = data::derive_seed(seed, data_stream);
      all = data::generate_hmm(cfg);
      break;
    }
    case ExperimentKind::icu_like: {
      auto cfg = c.icu;
      cfg.seed = data::derive_seed(seed, data_stream);
      all = data::generate_icu_like(cfg);
      break;
    }
    case ExperimentKind::csv:
      all = data::impute_forward_fill(data::load_csv(c.csv.path, c.csv.schema), c.csv.defaults);
      break;
  }
  const auto split = data::split_indices(all.samples, c.test_fraction, data::derive_seed(seed, split_stream));
  return {all.subset(split.train), all.subset(split.test)};
}

explain::SaliencyMap explain_method(const std::string& method, const nets::Classifier& model,
                                    const data::TimeSeriesDataset& dataset, std::span<const std::size_t> ids,
                                    const data::TimeSeriesDataset& reference, const ExperimentConfig& c,
                                    std::uint64_t seed) {
  std::function<explain::SaliencyMap(const num::Tensor&, std::span<const std::size_t>)> run;
  auto learned = c.learned;
  learned.seed = seed;
  if (method == "learned" || method == "learned_deletion" || method == "learned_gru" || method == "learned_zero") {
    if (method == "learned_deletion") learned.mode = explain::Mode::deletion;
    if (method == "learned_gru") learned.generator = perturb::GeneratorKind::unidirectional;
    if (method == "learned_zero") learned.generator = perturb::GeneratorKind::zero;
    run = [&](const num::Tensor& x, std::span<const std::size_t> rows) {
      return explain::explain_learned(model, x, rows, learned);
    };
  } else if (method == "dynamask") {
    run = [&](const num::Tensor& x, std::span<const std::size_t> rows) {
      return explain::explain_dynamask(model, x, rows, c.dynamask);
    };
  } else if (method == "occlusion") {
    run = [&](const num::Tensor& x, std::span<const std::size_t> rows) {
      return explain::occlusion(model, x, rows, c.occlusion_baseline);
    };
  } else if (method == "augmented_occlusion") {
    run = [&](const num::Tensor& x, std::span<const std::size_t> rows) {
      // Draws depend on the first id of the chunk so chunking stays deterministic.
      return explain::augmented_occlusion(model, x, rows, reference, c.occlusion_draws,
                                          data::derive_seed(seed, rows.front()));
    };
  } else if (method == "integrated_gradients") {
    run = [&](const num::Tensor& x, std::span<const std::size_t> rows) {
      return explain::integrated_gradients(model, x, rows, c.ig_steps, c.occlusion_baseline);
    };
  } else {
    throw std::invalid_argument("unknown explainer '" + method + "'");
  }
  if (ids.empty()) throw std::invalid_argument("explain_method: no samples to explain");

  const auto chunks = (ids.size() + c.explain_batch - 1) / c.explain_batch;
  std::vector<explain::SaliencyMap> parts(chunks);
  parallel_for(chunks, c.jobs, [&](std::size_t k) {
    const auto rows = ids.subspan(k * c.explain_batch, std::min(c.explain_batch, ids.size() - k * c.explain_batch));
    parts[k] = run(dataset.batch(rows), rows);
  });
  auto out = std::move(parts.front());
  for (std::size_t k = 1; k < chunks; ++k) out.append(parts[k]);
  out.method = method;
  return out;
}

FoldResult run_fold(const ExperimentConfig& c, std::size_t fold) {
  FoldResult out;
  out.fold = fold;
  const auto seed = fold_seed(c, fold);
  const auto fd = stage(fold, "data", [&] { return fold_data(c, fold); });

  const auto model = stage(fold, "train", [&] {
    auto mc = c.model;
    mc.input_size = fd.train.features;
    mc.seed = data::derive_seed(seed, model_stream);
    auto tc = c.train;
    tc.seed = data::derive_seed(seed, train_stream);
    return nets::train_classifier(fd.train, mc, tc).model.frozen();
  });
  out.classifier_auroc = stage(fold, "evaluate classifier", [&] { return classifier_auroc(model, fd.test); });
  out.rows.push_back({"classifier", "auroc", std::nullopt, std::nullopt, fold, out.classifier_auroc});
  spdlog::info("fold {}: classifier test AUROC {:.4f}", fold, out.classifier_auroc);

  const auto ids = explained_ids(c, fd.test);
  const auto explain_seed = data::derive_seed(seed, explain_stream);
  for (const auto& method : c.methods) {
    const auto started = std::chrono::steady_clock::now();
    auto map = stage(fold, "explain " + method,
                     [&] { return explain_method(method, model, fd.test, ids, fd.train, c, explain_seed); });
    spdlog::info("fold {}: {} took {:.1f} s", fold, method,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    stage(fold, "metrics " + method, [&] {
      if (fd.test.has_truth()) {
        ground_truth_rows(out, method, metrics::ground_truth_report(map, fd.test, c.threshold_points, c.threshold_grid));
      }
      if (c.masked_metrics) {
        for (auto s : c.substitutions) {
          for (double frac : c.fractions) masked_rows(out, method, metrics::masked_prediction_metrics(model, fd.test, map, frac, s));
        }
      }
      return 0;
    });
    out.maps.emplace(method, std::move(map));
  }

  if (c.lambda_ablation && fold < c.lambda_folds) {
    stage(fold, "lambda ablation", [&] {
      if (!fd.test.has_truth()) throw std::invalid_argument("the lambda ablation needs ground-truth saliency");
      auto cfg = c;
      const auto grid_ids = std::vector<std::size_t>(ids.begin(), ids.begin() + std::min(c.lambda_samples, ids.size()));
      for (double l1 : c.lambda_values) {
        for (double l2 : c.lambda_values) {
          cfg.learned.lambda1 = l1;
          cfg.learned.lambda2 = l2;
          const auto map = explain_method("learned", model, fd.test, grid_ids, fd.train, cfg, explain_seed);
          const auto r = metrics::ground_truth_report(map, fd.test, c.threshold_points, c.threshold_grid);
          out.grid.push_back({l1, l2, fold, r.aup, r.aur});
          spdlog::info("fold {}: lambda1 {} lambda2 {}: AUP {:.3f} AUR {:.3f}", fold, l1, l2, r.aup, r.aur);
        }
      }
      return 0;
    });
  }

  if (c.temporal_analysis) {
    stage(fold, "temporal analysis", [&] {
      const auto T = fd.test.steps;
      const auto ks = curve_steps(T);
      for (bool last : {false, true}) {
        for (const auto& p : metrics::positive_rate_masking_curve(model, fd.test, ks, last)) {
          out.curves.push_back({fold, last ? "last" : "first", p.k, p.positive_rate});
          if (p.k == T / 4) {
            out.rows.push_back({"classifier", last ? "positive_rate_last_quarter" : "positive_rate_first_quarter",
                                std::nullopt, std::nullopt, fold, p.positive_rate});
          }
        }
      }
      return 0;
    });
  }
  return out;
}

std::vector<Summary> summarize(const std::vector<ResultRow>& rows) {
  std::vector<Summary> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const Summary& s) {
      return s.method == r.method && s.metric == r.metric && s.fraction == r.fraction && s.substitution == r.substitution;
    });
    if (it == out.end()) {
      out.push_back({r.method, r.metric, r.fraction, r.substitution, 0, 0, 0});
      values.emplace_back();
      it = out.end() - 1;
    }
    values[static_cast<std::size_t>(it - out.begin())].push_back(r.value);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& v = values[i];
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    out[i].mean = mean;
    out[i].std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    out[i].folds = v.size();
  }
  return out;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("method,metric,fraction,substitution,fold,value\n");
  for (const auto& r : rows) {
    out.print("{},{},{},{},{},{}\n", r.method, r.metric, fraction_field(r.fraction), substitution_field(r.substitution),
              r.fold, r.value);
  }
}

void write_summary_csv(const std::vector<Summary>& summary, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("method,metric,fraction,substitution,mean,std,folds\n");
  for (const auto& s : summary) {
    out.print("{},{},{},{},{},{},{}\n", s.method, s.metric, fraction_field(s.fraction), substitution_field(s.substitution),
              s.mean, s.std, s.folds);
  }
}

namespace {

void write_grid(const std::vector<FoldResult>& folds, const std::filesystem::path& dir) {
  std::vector<GridCell> cells;
  for (const auto& f : folds) cells.insert(cells.end(), f.grid.begin(), f.grid.end());
  if (cells.empty()) return;
  {
    auto out = fmt::output_file((dir / "lambda_grid_folds.csv").string());
    out.print("lambda1,lambda2,fold,aup,aur\n");
    for (const auto& g : cells) out.print("{},{},{},{},{}\n", g.lambda1, g.lambda2, g.fold, g.aup, g.aur);
  }
  std::vector<ResultRow> rows;
  for (const auto& g : cells) {
    const auto key = fmt::format("{}:{}", g.lambda1, g.lambda2);
    rows.push_back({key, "aup", std::nullopt, std::nullopt, g.fold, g.aup});
    rows.push_back({key, "aur", std::nullopt, std::nullopt, g.fold, g.aur});
  }
  const auto summary = summarize(rows);
  auto out = fmt::output_file((dir / "lambda_grid.csv").string());
  out.print("lambda1,lambda2,aup_mean,aup_std,aur_mean,aur_std,folds\n");
  for (std::size_t i = 0; i + 1 < summary.size(); i += 2) {
    const auto colon = summary[i].method.find(':');
    out.print("{},{},{},{},{},{},{}\n", summary[i].method.substr(0, colon), summary[i].method.substr(colon + 1),
              summary[i].mean, summary[i].std, summary[i + 1].mean, summary[i + 1].std, summary[i].folds);
  }
}

void write_curves(const std::vector<FoldResult>& folds, const std::filesystem::path& dir) {
  bool any = false;
  for (const auto& f : folds) any = any || !f.curves.empty();
  if (!any) return;
  auto out = fmt::output_file((dir / "positive_rate.csv").string());
  out.print("fold,side,k,positive_rate\n");
  for (const auto& f : folds) {
    for (const auto& c : f.curves) out.print("{},{},{},{}\n", c.fold, c.side, c.k, c.positive_rate);
  }
}

void write_importance(const std::vector<FoldResult>& folds, const std::filesystem::path& dir) {
  auto out = fmt::output_file((dir / "importance.csv").string());
  out.print("method,fold,axis,index,mean,half_width\n");
  for (const auto& f : folds) {
    for (const auto& [method, map] : f.maps) {
      if (map.samples() < 2) continue;
      const auto s = metrics::aggregate_importance(map);
      for (std::size_t i = 0; i < s.per_feature.size(); ++i) {
        out.print("{},{},feature,{},{},{}\n", method, f.fold, i, s.per_feature[i].mean, s.per_feature[i].half_width);
      }
      for (std::size_t t = 0; t < s.per_time.size(); ++t) {
        out.print("{},{},time,{},{},{}\n", method, f.fold, t, s.per_time[t].mean, s.per_time[t].half_width);
      }
    }
  }
}

void write_charts(const std::vector<Summary>& summary, const std::filesystem::path& dir) {
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<std::pair<double, double>>>> charts;
  for (const auto& s : summary) {
    if (!s.fraction || !s.substitution) continue;
    charts[{s.metric, metrics::to_string(*s.substitution)}][s.method].emplace_back(*s.fraction, s.mean);
  }
  if (charts.empty()) return;
  std::filesystem::create_directories(dir / "charts");
  for (auto& [key, series] : charts) {
    LineChart chart;
    chart.title = fmt::format("{} ({} substitution)", key.first, key.second);
    chart.x_label = "fraction of cells masked";
    chart.y_label = key.first;
    for (auto& [method, points] : series) {
      std::sort(points.begin(), points.end());
      chart.series.push_back({method, points});
    }
    write_line_chart(chart, dir / "charts" / fmt::format("{}_{}.svg", key.first, key.second));
  }
}

void write_outputs(const ExperimentConfig& c, const std::vector<FoldResult>& folds) {
  const auto& dir = c.output;
  std::vector<ResultRow> rows;
  for (const auto& f : folds) rows.insert(rows.end(), f.rows.begin(), f.rows.end());
  const auto name = to_string(c.experiment);
  write_results_csv(rows, dir / (name + "_results.csv"));
  const auto summary = summarize(rows);
  write_summary_csv(summary, dir / (name + "_summary.csv"));
  write_grid(folds, dir);
  write_curves(folds, dir);
  write_importance(folds, dir);
  write_charts(summary, dir);
  if (c.save_maps) {
    std::filesystem::create_directories(dir / "maps");
    for (const auto& f : folds) {
      for (const auto& [method, map] : f.maps) {
        explain::write_saliency_csv(map, dir / "maps" / fmt::format("{}_fold{}.csv", method, f.fold));
      }
    }
  }
}

}  // namespace

std::vector<FoldResult> run_experiment(const ExperimentConfig& config, bool force) {
  config.validate();
  const auto& dir = config.output;
  if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir) && !force) {
    throw std::runtime_error("output directory " + dir.string() + " already exists; pass --force to overwrite");
  }
  std::filesystem::create_directories(dir);
  save_config(config, dir / "config.ini");

  const auto concurrent = std::min(config.jobs, config.folds);
  auto inner = config;
  inner.jobs = std::max<std::size_t>(config.jobs / concurrent, 1);

  std::vector<std::optional<FoldResult>> results(config.folds);
  std::exception_ptr failure;
  try {
    parallel_for(config.folds, concurrent, [&](std::size_t fold) { results[fold] = run_fold(inner, fold); });
  } catch (...) {
    failure = std::current_exception();
  }
  std::vector<FoldResult> done;
  for (auto& r : results) {
    if (r) done.push_back(std::move(*r));
  }
  write_outputs(config, done);
  if (failure) std::rethrow_exception(failure);
  return done;
}

}  // namespace tempex::cli

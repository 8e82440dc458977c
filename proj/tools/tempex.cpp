// tempex: dataset generation, training, explanation and experiment runs.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <iostream>

#include "tempex/cli/experiment.hpp"
#include "tempex/datagen/archive.hpp"

using namespace tempex;

namespace {

std::map<std::string, std::string> parse_sets(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

cli::ExperimentConfig build_config(const std::string& config_path, const std::string& experiment,
                                   const std::string& profile, const std::vector<std::string>& sets) {
  auto config = config_path.empty() ? cli::default_config(cli::parse_experiment(experiment), profile)
                                    : cli::load_config(config_path);
  cli::apply_overrides(config, parse_sets(sets));
  cli::apply_seed_env(config);
  return config;
}

std::vector<std::size_t> first_ids(std::size_t available, std::size_t requested) {
  std::vector<std::size_t> ids(requested == 0 ? available : std::min(requested, available));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saliency maps for recurrent time-series classifiers"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset archive");
  std::string gen_kind = "hmm", gen_out;
  std::size_t gen_samples = 0, gen_steps = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--experiment", gen_kind, "hmm or icu_like")->capture_default_str();
  gen->add_option("--samples", gen_samples, "Number of series (0 keeps the default)");
  gen->add_option("--steps", gen_steps, "Series length (0 keeps the default)");
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("-o,--output", gen_out, "Archive path")->required();

  // train
  auto* train = app.add_subcommand("train", "Train the GRU classifier on a dataset archive");
  std::string train_data, train_out, train_readout;
  nets::ClassifierConfig train_model;
  nets::TrainConfig train_cfg;
  train->add_option("--data", train_data, "Dataset archive")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--output", train_out, "Checkpoint path (JSON)")->required();
  train->add_option("--hidden", train_model.hidden_size, "GRU hidden size")->capture_default_str();
  train->add_option("--readout", train_readout, "per_timestep or final_step (default: from the labels)");
  train->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  train->add_option("--lr", train_cfg.lr)->capture_default_str();
  train->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
  train->add_option("--seed", train_cfg.seed)->capture_default_str();

  // explain
  auto* expl = app.add_subcommand("explain", "Write a saliency map for samples of a dataset");
  std::string expl_model, expl_data, expl_method = "learned", expl_out, expl_config;
  std::size_t expl_samples = 0;
  std::vector<std::string> expl_sets;
  expl->add_option("--model", expl_model, "Classifier checkpoint")->required()->check(CLI::ExistingFile);
  expl->add_option("--data", expl_data, "Dataset archive")->required()->check(CLI::ExistingFile);
  expl->add_option("--method", expl_method, "Explainer name")->capture_default_str();
  expl->add_option("--samples", expl_samples, "Explain the first N samples (0 = all)");
  expl->add_option("--config", expl_config, "INI file with explainer settings")->check(CLI::ExistingFile);
  expl->add_option("--set", expl_sets, "Override a config key (section.key=value)");
  expl->add_option("-o,--output", expl_out, "Saliency CSV")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a saliency map");
  std::string eval_model, eval_data, eval_map;
  std::vector<double> eval_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  std::vector<std::string> eval_subs{"average", "zeros"};
  bool eval_masked = false;
  eval->add_option("--model", eval_model, "Classifier checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Dataset archive")->required()->check(CLI::ExistingFile);
  eval->add_option("--map", eval_map, "Saliency CSV")->required()->check(CLI::ExistingFile);
  eval->add_flag("--masked", eval_masked, "Also compute masked-prediction metrics");
  eval->add_option("--fractions", eval_fractions)->capture_default_str();
  eval->add_option("--substitutions", eval_subs)->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Run a full experiment over folds");
  std::string run_kind = "hmm", run_profile = "full", run_config, run_output, run_ablation;
  std::size_t run_folds = 0, run_jobs = 0;
  bool run_force = false, run_generators = false, run_deletion = false;
  std::vector<std::string> run_sets;
  run->add_option("--experiment", run_kind, "hmm, icu_like or csv")->capture_default_str();
  run->add_option("--profile", run_profile, "full or fast")->capture_default_str();
  run->add_option("--config", run_config, "INI config file")->check(CLI::ExistingFile);
  run->add_option("--set", run_sets, "Override a config key (section.key=value)");
  run->add_option("--folds", run_folds, "Number of folds");
  run->add_option("--jobs", run_jobs, "Worker threads");
  run->add_option("-o,--output", run_output, "Output directory");
  run->add_option("--ablation", run_ablation, "Extra ablation to run")->check(CLI::IsMember({"lambda"}));
  run->add_flag("--compare-generators", run_generators, "Also run the GRU and zero generators");
  run->add_flag("--deletion", run_deletion, "Also run the deletion game");
  run->add_flag("--force", run_force, "Reuse an existing output directory");

  // report
  auto* rep = app.add_subcommand("report", "Summarise a completed run directory");
  std::string rep_dir;
  rep->add_option("dir", rep_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*gen) {
      data::TimeSeriesDataset ds;
      const auto kind = cli::parse_experiment(gen_kind);
      if (kind == cli::ExperimentKind::hmm) {
        data::HmmConfig c;
        if (gen_samples) c.series = gen_samples;
        if (gen_steps) c.steps = gen_steps;
        c.seed = gen_seed;
        ds = data::generate_hmm(c);
      } else if (kind == cli::ExperimentKind::icu_like) {
        data::IcuLikeConfig c;
        if (gen_samples) c.samples = gen_samples;
        if (gen_steps) c.steps = gen_steps;
        c.seed = gen_seed;
        ds = data::generate_icu_like(c);
      } else {
        throw std::invalid_argument("generate supports hmm and icu_like");
      }
      data::save_archive(ds, gen_out);
      fmt::print("wrote {} series of {} steps x {} features to {}\n", ds.samples, ds.steps, ds.features, gen_out);
    } else if (*train) {
      const auto ds = data::load_archive(train_data);
      train_model.input_size = ds.features;
      train_model.seed = train_cfg.seed;
      train_model.readout = train_readout.empty()
                                ? (ds.label_kind == data::LabelKind::per_timestep ? nets::Readout::per_timestep
                                                                                   : nets::Readout::final_step)
                                : nets::parse_readout(train_readout);
      const auto result = nets::train_classifier(ds, train_model, train_cfg);
      nets::save_classifier(result.model, train_out);
      fmt::print("final training loss {:.5f}; checkpoint written to {}\n", result.epoch_loss.back(), train_out);
    } else if (*expl) {
      auto config = build_config(expl_config, "hmm", "full", expl_sets);
      const auto ds = data::load_archive(expl_data);
      const auto model = nets::load_classifier(expl_model).frozen();
      const auto ids = first_ids(ds.samples, expl_samples);
      const auto map = cli::explain_method(expl_method, model, ds, ids, ds, config, config.seed);
      explain::write_saliency_csv(map, expl_out);
      fmt::print("explained {} samples with {}; map written to {}\n", map.samples(), expl_method, expl_out);
    } else if (*eval) {
      const auto ds = data::load_archive(eval_data);
      const auto model = nets::load_classifier(eval_model).frozen();
      const auto map = explain::read_saliency_csv(eval_map);
      fmt::print("metric,fraction,substitution,value\n");
      if (ds.has_truth()) {
        const auto r = metrics::ground_truth_report(map, ds);
        fmt::print("aup,,,{}\naur,,,{}\ninformation,,,{}\nentropy,,,{}\n", r.aup, r.aur, r.information, r.entropy);
      }
      if (eval_masked || !ds.has_truth()) {
        for (const auto& name : eval_subs) {
          const auto sub = metrics::parse_substitution(name);
          for (double f : eval_fractions) {
            const auto r = metrics::masked_prediction_metrics(model, ds, map, f, sub);
            const auto s = metrics::to_string(sub);
            fmt::print("accuracy,{0},{1},{2}\ncross_entropy,{0},{1},{3}\ncomprehensiveness,{0},{1},{4}\nsufficiency,{0},{1},{5}\n",
                       f, s, r.accuracy, r.cross_entropy, r.comprehensiveness, r.sufficiency);
          }
        }
      }
    } else if (*run) {
      auto config = build_config(run_config, run_kind, run_profile, run_sets);
      if (run_folds) config.folds = run_folds;
      if (run_jobs) config.jobs = run_jobs;
      if (!run_output.empty()) config.output = run_output;
      if (run_ablation == "lambda") config.lambda_ablation = true;
      auto add = [&](const std::string& m) {
        if (std::find(config.methods.begin(), config.methods.end(), m) == config.methods.end()) config.methods.push_back(m);
      };
      if (run_generators) {
        add("learned");
        add("learned_gru");
        add("learned_zero");
      }
      if (run_deletion) {
        add("learned");
        add("learned_deletion");
      }
      cli::run_experiment(config, run_force);
      cli::report(config.output, std::cout);
    } else if (*rep) {
      cli::report(rep_dir, std::cout);
    }
  } catch (const cli::StageError& e) {
    spdlog::error("{}", e.what());
    spdlog::error("partial results were kept in the output directory");
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

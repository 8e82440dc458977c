#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "tempex/cli/experiment.hpp"

namespace tempex::cli {

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::hmm: return "hmm";
    case ExperimentKind::icu_like: return "icu_like";
    case ExperimentKind::csv: return "csv";
  }
  return "?";
}

ExperimentKind parse_experiment(const std::string& s) {
  if (s == "hmm") return ExperimentKind::hmm;
  if (s == "icu_like" || s == "icu") return ExperimentKind::icu_like;
  if (s == "csv") return ExperimentKind::csv;
  throw std::invalid_argument("unknown experiment '" + s + "' (expected hmm, icu_like or csv)");
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names{
      "learned",   "learned_deletion", "learned_gru",         "learned_zero",
      "dynamask",  "occlusion",        "augmented_occlusion", "integrated_gradients"};
  return names;
}

void ExperimentConfig::validate() const {
  if (folds == 0) throw std::invalid_argument("run.folds must be at least 1");
  if (jobs == 0) throw std::invalid_argument("run.jobs must be at least 1");
  if (explain_batch == 0) throw std::invalid_argument("run.explain_batch must be at least 1");
  if (!(test_fraction > 0) || !(test_fraction < 1)) throw std::invalid_argument("dataset.test_fraction must lie in (0, 1)");
  if (methods.empty()) throw std::invalid_argument("explainers.methods is empty");
  for (const auto& m : methods) {
    const auto& k = known_methods();
    if (std::find(k.begin(), k.end(), m) == k.end()) throw std::invalid_argument("unknown explainer '" + m + "'");
  }
  learned.validate();
  dynamask.validate();
  for (double f : fractions) {
    if (!(f > 0) || !(f < 1)) throw std::invalid_argument("metrics.fractions must lie in (0, 1)");
  }
  if (masked_metrics && (fractions.empty() || substitutions.empty())) {
    throw std::invalid_argument("masked metrics need fractions and substitutions");
  }
  if (lambda_ablation && (lambda_values.empty() || lambda_folds == 0)) {
    throw std::invalid_argument("ablation.lambda needs values and at least one fold");
  }
  if (experiment == ExperimentKind::csv && csv.path.empty()) throw std::invalid_argument("dataset.path is required for csv");
  if (experiment == ExperimentKind::hmm) hmm.validate();
  if (experiment == ExperimentKind::icu_like) icu.validate();
}

ExperimentConfig default_config(ExperimentKind kind, const std::string& profile) {
  if (profile != "full" && profile != "fast") throw std::invalid_argument("unknown profile '" + profile + "'");
  const bool fast = profile == "fast";
  ExperimentConfig c;
  c.experiment = kind;
  c.profile = profile;
  c.output = "results/" + to_string(kind);
  c.train.batch_size = 32;
  c.fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  c.substitutions = {metrics::Substitution::time_average, metrics::Substitution::zeros};
  if (fast) {
    c.learned.iterations = 100;
    c.dynamask.iterations = 100;
  }
  switch (kind) {
    case ExperimentKind::hmm:
      c.hmm.series = fast ? 200 : 1000;
      c.hmm.steps = fast ? 100 : 200;
      c.model = {.input_size = 3, .hidden_size = 32, .classes = 2, .readout = nets::Readout::per_timestep};
      c.train.epochs = 20;
      c.train.lr = 1e-2;
      c.methods = {"learned", "dynamask", "occlusion", "augmented_occlusion", "integrated_gradients"};
      c.lambda_samples = fast ? 40 : 100;
      break;
    case ExperimentKind::icu_like:
    case ExperimentKind::csv:
      c.icu.samples = fast ? 300 : 1000;
      c.model = {.input_size = c.icu.features, .hidden_size = 200, .classes = 2, .readout = nets::Readout::final_step};
      c.train.epochs = fast ? 10 : 30;
      c.train.lr = 1e-3;
      c.methods = {"learned", "occlusion", "augmented_occlusion", "integrated_gradients"};
      c.explain_samples = 100;
      c.masked_metrics = true;
      c.temporal_analysis = kind == ExperimentKind::icu_like;
      c.lambda_samples = fast ? 40 : 100;
      break;
  }
  return c;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const auto s = trim(raw);
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const auto s = trim(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + s + "'");
}

template <typename T>
std::vector<T> parse_numbers(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  for (const auto& item : split_list(raw)) out.push_back(parse_number<T>(key, item));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& items) {
  std::vector<std::string> s;
  for (auto v : items) {
    std::ostringstream os;
    os << v;
    s.push_back(os.str());
  }
  return join(s);
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

// Every recognised key, with its setter.
const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size = [](std::size_t ExperimentConfig::*field) {
      return [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.*field = parse_number<std::size_t>(k, v);
      };
    };
    t["run.experiment"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.experiment = parse_experiment(trim(v)); };
    t["run.profile"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.profile = trim(v); };
    t["run.folds"] = size(&ExperimentConfig::folds);
    t["run.seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); };
    t["run.output"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.output = trim(v); };
    t["run.jobs"] = size(&ExperimentConfig::jobs);
    t["run.explain_samples"] = size(&ExperimentConfig::explain_samples);
    t["run.explain_batch"] = size(&ExperimentConfig::explain_batch);
    t["run.save_maps"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.save_maps = parse_bool(k, v); };

    t["dataset.series"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.hmm.series = parse_number<std::size_t>(k, v);
    };
    t["dataset.samples"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.icu.samples = parse_number<std::size_t>(k, v);
      c.hmm.series = c.icu.samples;
    };
    t["dataset.steps"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.icu.steps = c.hmm.steps = parse_number<std::size_t>(k, v);
    };
    t["dataset.features"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.icu.features = parse_number<std::size_t>(k, v);
      if (c.experiment == ExperimentKind::icu_like) c.model.input_size = c.icu.features;
    };
    t["dataset.test_fraction"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.test_fraction = parse_number<double>(k, v);
    };
    t["dataset.late_fraction"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.icu.late_fraction = parse_number<double>(k, v);
    };
    t["dataset.gain"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.icu.gain = parse_number<double>(k, v); };
    t["dataset.informative"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.icu.informative = parse_numbers<std::size_t>(k, v);
    };
    t["dataset.weights"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.icu.weights = parse_numbers<double>(k, v);
    };
    t["dataset.path"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.csv.path = trim(v); };
    t["dataset.sample_column"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.csv.schema.sample_column = trim(v); };
    t["dataset.time_column"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.csv.schema.time_column = trim(v); };
    t["dataset.label_column"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.csv.schema.label_column = trim(v); };
    t["dataset.label_kind"] = [](ExperimentConfig& c, auto&, const std::string& v) {
      c.csv.schema.label_kind = data::parse_label_kind(trim(v));
    };
    t["dataset.feature_columns"] = [](ExperimentConfig& c, auto&, const std::string& v) {
      c.csv.schema.feature_columns = split_list(v);
    };
    t["dataset.defaults"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.csv.defaults = parse_numbers<double>(k, v);
    };

    t["model.hidden_size"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.model.hidden_size = parse_number<std::size_t>(k, v);
    };
    t["model.direction"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.model.direction = nets::parse_direction(trim(v)); };
    t["model.readout"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.model.readout = nets::parse_readout(trim(v)); };
    t["model.epochs"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.train.epochs = parse_number<std::size_t>(k, v);
    };
    t["model.lr"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.lr = parse_number<double>(k, v); };
    t["model.batch_size"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.train.batch_size = parse_number<std::size_t>(k, v);
    };

    t["explainers.methods"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.methods = split_list(v); };
    auto learned_num = [](double explain::LearnedConfig::*field) {
      return [field](ExperimentConfig& c, const std::string& k, const std::string& v) { c.learned.*field = parse_number<double>(k, v); };
    };
    t["explainers.learned.lambda1"] = learned_num(&explain::LearnedConfig::lambda1);
    t["explainers.learned.lambda2"] = learned_num(&explain::LearnedConfig::lambda2);
    t["explainers.learned.mask_lr"] = learned_num(&explain::LearnedConfig::mask_lr);
    t["explainers.learned.generator_lr"] = learned_num(&explain::LearnedConfig::generator_lr);
    t["explainers.learned.tolerance"] = learned_num(&explain::LearnedConfig::tolerance);
    t["explainers.learned.iterations"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.learned.iterations = parse_number<std::size_t>(k, v);
    };
    t["explainers.learned.patience"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.learned.patience = parse_number<std::size_t>(k, v);
    };
    t["explainers.learned.generator"] = [](ExperimentConfig& c, auto&, const std::string& v) {
      c.learned.generator = perturb::parse_generator_kind(trim(v));
    };
    t["explainers.learned.target"] = [](ExperimentConfig& c, auto&, const std::string& v) { c.learned.target = explain::parse_target(trim(v)); };

    t["explainers.dynamask.area"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.dynamask.area = parse_number<double>(k, v);
    };
    t["explainers.dynamask.kind"] = [](ExperimentConfig& c, auto&, const std::string& v) {
      c.dynamask.perturbation.kind = perturb::parse_fixed_kind(trim(v));
    };
    t["explainers.dynamask.window"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.dynamask.perturbation.window = parse_number<std::size_t>(k, v);
    };
    t["explainers.dynamask.sigma_max"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.dynamask.perturbation.sigma_max = parse_number<double>(k, v);
    };
    t["explainers.dynamask.iterations"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.dynamask.iterations = parse_number<std::size_t>(k, v);
    };
    t["explainers.dynamask.lr"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.dynamask.lr = parse_number<double>(k, v);
    };
    t["explainers.dynamask.reg_initial"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.dynamask.reg_initial = parse_number<double>(k, v);
    };
    t["explainers.dynamask.reg_growth"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.dynamask.reg_growth = parse_number<double>(k, v);
    };
    t["explainers.dynamask.target"] = [](ExperimentConfig& c, auto&, const std::string& v) {
      c.dynamask.target = explain::parse_target(trim(v));
    };
    t["explainers.occlusion.baseline"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.occlusion_baseline = parse_number<double>(k, v);
    };
    t["explainers.augmented_occlusion.draws"] = size(&ExperimentConfig::occlusion_draws);
    t["explainers.integrated_gradients.steps"] = size(&ExperimentConfig::ig_steps);

    t["metrics.masked"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.masked_metrics = parse_bool(k, v); };
    t["metrics.fractions"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.fractions = parse_numbers<double>(k, v);
    };
    t["metrics.substitutions"] = [](ExperimentConfig& c, auto&, const std::string& v) {
      c.substitutions.clear();
      for (const auto& s : split_list(v)) c.substitutions.push_back(metrics::parse_substitution(s));
    };
    t["metrics.threshold_grid"] = [](ExperimentConfig& c, auto&, const std::string& v) {
      c.threshold_grid = metrics::parse_threshold_grid(trim(v));
    };
    t["metrics.threshold_points"] = size(&ExperimentConfig::threshold_points);
    t["metrics.temporal"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.temporal_analysis = parse_bool(k, v);
    };

    t["ablation.lambda"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.lambda_ablation = parse_bool(k, v); };
    t["ablation.lambda_values"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.lambda_values = parse_numbers<double>(k, v);
    };
    t["ablation.lambda_folds"] = size(&ExperimentConfig::lambda_folds);
    t["ablation.lambda_samples"] = size(&ExperimentConfig::lambda_samples);
    return t;
  }();
  return table;
}

void flatten(const boost::property_tree::ptree& tree, const std::string& prefix, std::map<std::string, std::string>& out) {
  for (const auto& [key, child] : tree) {
    const auto name = prefix.empty() ? key : prefix + "." + key;
    if (child.empty()) {
      out[name] = child.data();
    } else {
      flatten(child, name, out);
    }
  }
}

}  // namespace

void apply_overrides(ExperimentConfig& config, const std::map<std::string, std::string>& overrides) {
  const auto& table = setters();
  for (const auto& [key, value] : overrides) {
    auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second(config, key, value);
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::runtime_error("config: " + std::string(e.what()));
  }
  std::map<std::string, std::string> keys;
  flatten(tree, "", keys);
  const auto kind = parse_experiment(keys.count("run.experiment") ? trim(keys["run.experiment"]) : "hmm");
  auto config = default_config(kind, keys.count("run.profile") ? trim(keys["run.profile"]) : "full");
  apply_overrides(config, keys);
  return config;
}

void apply_seed_env(ExperimentConfig& config) {
  if (const char* s = std::getenv("TEMPEX_SEED"); s != nullptr && *s != '\0') {
    config.seed = parse_number<std::uint64_t>("TEMPEX_SEED", s);
  }
}

void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path.string());
  const bool icu = c.experiment != ExperimentKind::hmm;
  std::vector<std::string> subs;
  for (auto s : c.substitutions) subs.push_back(metrics::to_string(s));
  out << "[run]\n"
      << "experiment = " << to_string(c.experiment) << "\nprofile = " << c.profile << "\nfolds = " << c.folds
      << "\nseed = " << c.seed << "\noutput = " << c.output.string() << "\njobs = " << c.jobs
      << "\nexplain_samples = " << c.explain_samples << "\nexplain_batch = " << c.explain_batch
      << "\nsave_maps = " << (c.save_maps ? "true" : "false") << "\n\n[dataset]\n";
  if (c.experiment == ExperimentKind::hmm) {
    out << "series = " << c.hmm.series << "\nsteps = " << c.hmm.steps << "\n";
  } else if (c.experiment == ExperimentKind::icu_like) {
    out << "samples = " << c.icu.samples << "\nsteps = " << c.icu.steps << "\nfeatures = " << c.icu.features
        << "\nlate_fraction = " << c.icu.late_fraction << "\ngain = " << c.icu.gain
        << "\ninformative = " << join_numbers(c.icu.informative) << "\nweights = " << join_numbers(c.icu.weights) << "\n";
  } else {
    out << "path = " << c.csv.path.string() << "\nsample_column = " << c.csv.schema.sample_column
        << "\ntime_column = " << c.csv.schema.time_column << "\nlabel_column = " << c.csv.schema.label_column
        << "\nlabel_kind = " << data::to_string(c.csv.schema.label_kind)
        << "\nfeature_columns = " << join(c.csv.schema.feature_columns) << "\ndefaults = " << join_numbers(c.csv.defaults)
        << "\n";
  }
  out << "test_fraction = " << c.test_fraction << "\n\n[model]\n"
      << "hidden_size = " << c.model.hidden_size << "\ndirection = " << nets::to_string(c.model.direction)
      << "\nreadout = " << nets::to_string(c.model.readout) << "\nepochs = " << c.train.epochs << "\nlr = " << c.train.lr
      << "\nbatch_size = " << c.train.batch_size << "\n\n[explainers]\nmethods = " << join(c.methods) << "\n\n"
      << "[explainers.learned]\nlambda1 = " << c.learned.lambda1 << "\nlambda2 = " << c.learned.lambda2
      << "\ngenerator = " << perturb::to_string(c.learned.generator) << "\ntarget = " << explain::to_string(c.learned.target)
      << "\nmask_lr = " << c.learned.mask_lr << "\ngenerator_lr = " << c.learned.generator_lr
      << "\niterations = " << c.learned.iterations << "\ntolerance = " << c.learned.tolerance
      << "\npatience = " << c.learned.patience << "\n\n[explainers.dynamask]\narea = " << c.dynamask.area
      << "\nkind = " << perturb::to_string(c.dynamask.perturbation.kind) << "\nwindow = " << c.dynamask.perturbation.window
      << "\nsigma_max = " << c.dynamask.perturbation.sigma_max << "\niterations = " << c.dynamask.iterations
      << "\nlr = " << c.dynamask.lr << "\nreg_initial = " << c.dynamask.reg_initial << "\nreg_growth = " << c.dynamask.reg_growth
      << "\ntarget = " << explain::to_string(c.dynamask.target) << "\n\n[explainers.occlusion]\nbaseline = " << c.occlusion_baseline
      << "\n\n[explainers.augmented_occlusion]\ndraws = " << c.occlusion_draws
      << "\n\n[explainers.integrated_gradients]\nsteps = " << c.ig_steps << "\n\n[metrics]\nmasked = "
      << (c.masked_metrics ? "true" : "false") << "\nfractions = " << join_numbers(c.fractions)
      << "\nsubstitutions = " << join(subs) << "\nthreshold_grid = " << metrics::to_string(c.threshold_grid)
      << "\nthreshold_points = " << c.threshold_points << "\ntemporal = " << (c.temporal_analysis ? "true" : "false")
      << "\n\n[ablation]\nlambda = " << (c.lambda_ablation ? "true" : "false")
      << "\nlambda_values = " << join_numbers(c.lambda_values) << "\nlambda_folds = " << c.lambda_folds
      << "\nlambda_samples = " << c.lambda_samples << "\n";
  (void)icu;
}

}  // namespace tempex::cli

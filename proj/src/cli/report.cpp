#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "tempex/cli/experiment.hpp"

namespace tempex::cli {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ifstream open_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != header) throw std::runtime_error(path.string() + ": unexpected header '" + line + "'");
  return in;
}

struct GridRow {
  double lambda1 = 0, lambda2 = 0, aup = 0, aur = 0, aup_std = 0, aur_std = 0;
};

std::vector<GridRow> read_grid(const std::filesystem::path& path) {
  auto in = open_csv(path, "lambda1,lambda2,aup_mean,aup_std,aur_mean,aur_std,folds");
  std::vector<GridRow> out;
  for (std::string line; std::getline(in, line);) {
    const auto f = split_fields(line);
    if (f.size() != 7) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    out.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[4]), std::stod(f[3]), std::stod(f[5])});
  }
  return out;
}

class SummaryIndex {
 public:
  explicit SummaryIndex(std::vector<Summary> rows) : rows_(std::move(rows)) {}

  [[nodiscard]] const Summary* find(const std::string& method, const std::string& metric,
                                    std::optional<double> fraction = std::nullopt,
                                    std::optional<metrics::Substitution> s = std::nullopt) const {
    for (const auto& r : rows_) {
      if (r.method != method || r.metric != metric || r.substitution != s) continue;
      if (fraction.has_value() != r.fraction.has_value()) continue;
      if (fraction && std::abs(*fraction - *r.fraction) > 1e-9) continue;
      return &r;
    }
    return nullptr;
  }
  [[nodiscard]] bool has(const std::string& method, const std::string& metric) const {
    return std::any_of(rows_.begin(), rows_.end(), [&](const Summary& r) { return r.method == method && r.metric == metric; });
  }
  [[nodiscard]] const std::vector<Summary>& rows() const { return rows_; }

 private:
  std::vector<Summary> rows_;
};

std::string cell(const Summary* s) { return s ? fmt::format("{:.3f} ({:.3f})", s->mean, s->std) : "-"; }

struct RunFiles {
  ExperimentConfig config;
  SummaryIndex summary;
  std::filesystem::path dir;
};

RunFiles open_run(const std::filesystem::path& dir) {
  const auto config_path = dir / "config.ini";
  if (!std::filesystem::exists(config_path)) {
    throw std::runtime_error("not a completed run directory: " + dir.string() +
                             " (expected config.ini, <experiment>_results.csv and <experiment>_summary.csv)");
  }
  auto config = load_config(config_path);
  const auto name = to_string(config.experiment);
  std::vector<std::string> missing;
  for (const auto& f : {name + "_results.csv", name + "_summary.csv"}) {
    if (!std::filesystem::exists(dir / f)) missing.push_back(f);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw std::runtime_error("incomplete run directory " + dir.string() + ": missing " + list);
  }
  return {std::move(config), SummaryIndex(read_summary_csv(dir / (name + "_summary.csv"))), dir};
}

constexpr std::array<metrics::Substitution, 2> kSubstitutions{metrics::Substitution::time_average,
                                                              metrics::Substitution::zeros};
const std::array<std::string, 3> kBaselines{"occlusion", "augmented_occlusion", "integrated_gradients"};

}  // namespace

std::vector<Summary> read_summary_csv(const std::filesystem::path& path) {
  auto in = open_csv(path, "method,metric,fraction,substitution,mean,std,folds");
  std::vector<Summary> out;
  for (std::string line; std::getline(in, line);) {
    const auto f = split_fields(line);
    if (f.size() != 7) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    Summary s;
    s.method = f[0];
    s.metric = f[1];
    if (!f[2].empty()) s.fraction = std::stod(f[2]);
    if (!f[3].empty()) s.substitution = metrics::parse_substitution(f[3]);
    s.mean = std::stod(f[4]);
    s.std = std::stod(f[5]);
    s.folds = std::stoul(f[6]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Check> evaluate_checks(const std::filesystem::path& dir) {
  const auto run = open_run(dir);
  const auto& s = run.summary;
  std::vector<Check> out;

  const auto* aup = s.find("learned", "aup");
  const auto* aur = s.find("learned", "aur");
  if (run.config.experiment == ExperimentKind::hmm && aup && aur) {
    out.push_back({1, "learned explainer AUP >= 0.80 and AUR >= 0.70", aup->mean >= 0.80 && aur->mean >= 0.70,
                   fmt::format("AUP {} AUR {}", cell(aup), cell(aur))});
  }

  if (aup && aur && s.has("dynamask", "aup")) {
    const auto* info = s.find("learned", "information");
    const auto* ent = s.find("learned", "entropy");
    const auto* d_aup = s.find("dynamask", "aup");
    const auto* d_aur = s.find("dynamask", "aur");
    const auto* d_info = s.find("dynamask", "information");
    const auto* d_ent = s.find("dynamask", "entropy");
    const bool ok = aup->mean > d_aup->mean && info->mean > d_info->mean && ent->mean < d_ent->mean &&
                    aur->mean >= d_aur->mean - 0.05;
    out.push_back({2, "learned beats dynamask on AUP, information and entropy; AUR within 0.05", ok,
                   fmt::format("AUP {:.3f} vs {:.3f}, I {:.1f} vs {:.1f}, S {:.1f} vs {:.1f}, AUR {:.3f} vs {:.3f}",
                               aup->mean, d_aup->mean, info->mean, d_info->mean, ent->mean, d_ent->mean, aur->mean,
                               d_aur->mean)});
  }

  if (aup && aur && s.has("learned_deletion", "aup")) {
    const auto* del_aup = s.find("learned_deletion", "aup");
    const auto* del_aur = s.find("learned_deletion", "aur");
    out.push_back({3, "deletion has higher AUR and AUP lower by at least 0.3",
                   del_aur->mean > aur->mean && del_aup->mean <= aup->mean - 0.3,
                   fmt::format("deletion AUP {:.3f} AUR {:.3f}, preservation AUP {:.3f} AUR {:.3f}", del_aup->mean,
                               del_aur->mean, aup->mean, aur->mean)});
  }

  if (std::filesystem::exists(dir / "lambda_grid.csv")) {
    const auto grid = read_grid(dir / "lambda_grid.csv");
    if (!grid.empty()) {
      const auto best = *std::max_element(grid.begin(), grid.end(),
                                          [](const GridRow& a, const GridRow& b) { return a.aup * a.aur < b.aup * b.aur; });
      bool collapsed = true;
      for (const auto& g : grid) {
        if (g.lambda1 >= 10 && g.aur >= 0.3) collapsed = false;
      }
      out.push_back({4, "best AUP*AUR at lambda1 = 1 with lambda2 >= 1; lambda1 >= 10 gives AUR < 0.3",
                     best.lambda1 == 1.0 && best.lambda2 >= 1.0 && collapsed,
                     fmt::format("best at ({}, {}) with {:.3f}; large-lambda1 cells {}", best.lambda1, best.lambda2,
                                 best.aup * best.aur, collapsed ? "collapsed" : "not all below 0.3")});
    }
  }

  if (s.find("learned", "cross_entropy", 0.2, kSubstitutions[0])) {
    bool ok = true;
    std::string detail;
    bool compared = false;
    for (auto sub : kSubstitutions) {
      for (const auto& base : kBaselines) {
        if (!s.find(base, "cross_entropy", 0.2, sub)) continue;
        compared = true;
        auto get = [&](const std::string& m, const std::string& metric) {
          const auto* r = s.find(m, metric, 0.2, sub);
          return r ? r->mean : std::nan("");
        };
        const bool better = get("learned", "cross_entropy") > get(base, "cross_entropy") &&
                            get("learned", "comprehensiveness") > get(base, "comprehensiveness") &&
                            get("learned", "sufficiency") < get(base, "sufficiency") &&
                            get("learned", "accuracy") < get(base, "accuracy");
        if (!better) {
          ok = false;
          detail += fmt::format("{}not better than {} ({})", detail.empty() ? "" : "; ", base, metrics::to_string(sub));
        }
      }
    }
    if (compared) {
      out.push_back({5, "learned beats occlusion, augmented occlusion and IG at 20% on all four masked metrics", ok,
                     ok ? "all orderings hold" : detail});
    }

    if (s.has("learned_gru", "cross_entropy") && s.has("learned_zero", "cross_entropy")) {
      bool ordered = true;
      std::string d;
      for (auto sub : kSubstitutions) {
        const auto* gru = s.find("learned_gru", "cross_entropy", 0.2, sub);
        const auto* bi = s.find("learned", "cross_entropy", 0.2, sub);
        const auto* zero = s.find("learned_zero", "cross_entropy", 0.2, sub);
        if (!gru || !bi || !zero) continue;
        const bool a = gru->mean >= bi->mean - std::max(gru->std, bi->std);
        const bool b = bi->mean >= zero->mean - std::max(bi->std, zero->std);
        ordered = ordered && a && b;
        d += fmt::format("{}{}: GRU {} BiGRU {} Zeros {}", d.empty() ? "" : "; ", metrics::to_string(sub), cell(gru),
                         cell(bi), cell(zero));
      }
      out.push_back({6, "CE at 20%: GRU >= Bi-GRU >= Zeros within 1 std", ordered, d});
    }
  }

  const auto* first = s.find("classifier", "positive_rate_first_quarter");
  const auto* last = s.find("classifier", "positive_rate_last_quarter");
  if (first && last) {
    const double drop_first = 1 - first->mean, drop_last = 1 - last->mean;
    out.push_back({8, "masking the last quarter drops the positive rate 3x more than the first quarter",
                   drop_last > 0 && drop_last >= 3 * drop_first,
                   fmt::format("drop last {:.3f}, drop first {:.3f}", drop_last, drop_first)});
  }
  return out;
}

int report(const std::filesystem::path& dir, std::ostream& os) {
  const auto run = open_run(dir);
  const auto& s = run.summary;
  fmt::print(os, "run: {} ({} profile, {} folds, seed {})\n", to_string(run.config.experiment), run.config.profile,
             run.config.folds, run.config.seed);
  if (const auto* auroc = s.find("classifier", "auroc")) fmt::print(os, "classifier test AUROC: {}\n", cell(auroc));

  std::vector<std::string> methods;
  for (const auto& r : s.rows()) {
    if (r.method != "classifier" && std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }

  if (std::any_of(methods.begin(), methods.end(), [&](const auto& m) { return s.has(m, "aup"); })) {
    fmt::print(os, "\n{:<22} {:>16} {:>16} {:>20} {:>18}\n", "method", "AUP", "AUR", "information", "entropy");
    for (const auto& m : methods) {
      if (!s.has(m, "aup")) continue;
      fmt::print(os, "{:<22} {:>16} {:>16} {:>20} {:>18}\n", m, cell(s.find(m, "aup")), cell(s.find(m, "aur")),
                 cell(s.find(m, "information")), cell(s.find(m, "entropy")));
    }
  }

  if (s.has("learned", "aup") && s.has("learned_deletion", "aup")) {
    fmt::print(os, "\n{:<14} {:>16} {:>16}\n", "mode", "AUP", "AUR");
    fmt::print(os, "{:<14} {:>16} {:>16}\n", "preservation", cell(s.find("learned", "aup")), cell(s.find("learned", "aur")));
    fmt::print(os, "{:<14} {:>16} {:>16}\n", "deletion", cell(s.find("learned_deletion", "aup")),
               cell(s.find("learned_deletion", "aur")));
  }

  if (std::filesystem::exists(dir / "lambda_grid.csv")) {
    const auto grid = read_grid(dir / "lambda_grid.csv");
    std::vector<double> l2s;
    for (const auto& g : grid) {
      if (std::find(l2s.begin(), l2s.end(), g.lambda2) == l2s.end()) l2s.push_back(g.lambda2);
    }
    fmt::print(os, "\nlambda grid (AUP - AUR), rows lambda1, columns lambda2\n{:>8}", "");
    for (double l2 : l2s) fmt::print(os, " {:>13}", l2);
    double current = std::nan("");
    for (const auto& g : grid) {
      if (g.lambda1 != current) {
        current = g.lambda1;
        fmt::print(os, "\n{:>8}", g.lambda1);
      }
      fmt::print(os, " {:>13}", fmt::format("{:.2f} - {:.2f}", g.aup, g.aur));
    }
    fmt::print(os, "\n");
  }

  for (auto sub : kSubstitutions) {
    std::vector<double> fractions;
    for (const auto& r : s.rows()) {
      if (r.substitution == sub && r.fraction &&
          std::find(fractions.begin(), fractions.end(), *r.fraction) == fractions.end()) {
        fractions.push_back(*r.fraction);
      }
    }
    if (fractions.empty()) continue;
    fmt::print(os, "\nmasked predictions, {} substitution\n", metrics::to_string(sub));
    fmt::print(os, "{:<22} {:>8} {:>16} {:>16} {:>18} {:>16}\n", "method", "fraction", "accuracy", "cross-entropy",
               "comprehensiveness", "sufficiency");
    for (double frac : fractions) {
      for (const auto& m : methods) {
        if (!s.find(m, "accuracy", frac, sub)) continue;
        fmt::print(os, "{:<22} {:>8} {:>16} {:>16} {:>18} {:>16}\n", m, frac, cell(s.find(m, "accuracy", frac, sub)),
                   cell(s.find(m, "cross_entropy", frac, sub)), cell(s.find(m, "comprehensiveness", frac, sub)),
                   cell(s.find(m, "sufficiency", frac, sub)));
      }
    }
  }

  if (const auto* first = s.find("classifier", "positive_rate_first_quarter")) {
    fmt::print(os, "\npositive rate after masking the first quarter: {}\n", cell(first));
    fmt::print(os, "positive rate after masking the last quarter:  {}\n",
               cell(s.find("classifier", "positive_rate_last_quarter")));
  }

  const auto checks = evaluate_checks(dir);
  int failed = 0;
  if (!checks.empty()) fmt::print(os, "\nchecks\n");
  for (const auto& c : checks) {
    failed += c.passed ? 0 : 1;
    fmt::print(os, "  [{}] {}: {}\n", c.passed ? "ok" : "VIOLATION", c.description, c.detail);
  }
  return failed;
}

}  // namespace tempex::cli

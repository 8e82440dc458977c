#include "tempex/nets/classifier.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>

#include "tempex/numerics/adam.hpp"
#include "tempex/numerics/ops.hpp"

namespace tempex::nets {

std::string to_string(Readout r) { return r == Readout::per_timestep ? "per_timestep" : "final_step"; }

Readout parse_readout(const std::string& s) {
  if (s == "per_timestep") return Readout::per_timestep;
  if (s == "final_step") return Readout::final_step;
  throw std::invalid_argument("unknown readout '" + s + "'");
}

Classifier Classifier::init(const ClassifierConfig& c) {
  if (c.classes < 1) throw std::invalid_argument("classifier: need at least one class");
  std::mt19937_64 rng(c.seed);
  auto gru = init_gru(c.input_size, c.hidden_size, c.direction, rng, 0, "classifier.gru");
  const auto width = gru.output_size();
  const double k = 1.0 / std::sqrt(static_cast<double>(width));
  std::uniform_real_distribution<double> dist(-k, k);
  std::vector<double> w(width * c.classes), b(c.classes);
  for (auto& v : w) v = dist(rng);
  for (auto& v : b) v = dist(rng);
  return Classifier(std::move(gru), num::Tensor::parameter({width, c.classes}, std::move(w), "classifier.w_out"),
                    num::Tensor::parameter({c.classes}, std::move(b), "classifier.b_out"), c.readout);
}

Classifier::Classifier(GruParams gru, num::Tensor w_out, num::Tensor b_out, Readout readout)
    : gru_(std::move(gru)), w_out_(std::move(w_out)), b_out_(std::move(b_out)), readout_(readout) {
  gru_.validate();
  if (w_out_.rank() != 2 || w_out_.dim(0) != gru_.output_size() || b_out_.rank() != 1 ||
      b_out_.dim(0) != w_out_.dim(1)) {
    throw num::ShapeError("classifier readout", w_out_.shape(), b_out_.shape());
  }
}

num::Tensor Classifier::logits(const num::Tensor& x) const {
  if (x.rank() == 2) {
    auto y = logits(num::reshape(x, {1, x.dim(0), x.dim(1)}));
    auto s = y.shape();
    s.erase(s.begin());
    return num::reshape(y, s);
  }
  auto h = gru_forward(x, gru_);
  if (readout_ == Readout::final_step) {
    const auto T = h.dim(1);
    h = num::reshape(num::slice(h, 1, T - 1, T), {h.dim(0), h.dim(2)});
  }
  return num::matmul(h, w_out_) + b_out_;
}

num::Tensor Classifier::sequence_logits(const num::Tensor& x) const {
  auto y = logits(x.rank() == 2 ? num::reshape(x, {1, x.dim(0), x.dim(1)}) : x);
  if (readout_ == Readout::final_step) y = num::reshape(y, {y.dim(0), 1, y.dim(1)});
  return y;
}

num::Tensor Classifier::probabilities(const num::Tensor& x) const { return num::softmax(logits(x)); }

num::Tensor Classifier::class_probability(const num::Tensor& x, std::size_t target_class) const {
  if (target_class >= classes()) {
    throw std::out_of_range("class index " + std::to_string(target_class) + " out of range for " +
                            std::to_string(classes()) + " classes");
  }
  auto p = num::softmax(sequence_logits(x));
  const auto axis = p.rank() - 1;
  auto sel = num::slice(p, axis, target_class, target_class + 1);
  return num::reshape(sel, {p.dim(0), p.dim(1)});
}

std::vector<num::Tensor> Classifier::parameters() const {
  auto out = gru_.tensors();
  out.push_back(w_out_);
  out.push_back(b_out_);
  return out;
}

namespace {
num::Tensor constant_copy(const num::Tensor& t) { return num::Tensor::from(t.shape(), t.to_vector()); }

GruWeights constant_copy(const GruWeights& w) {
  return {constant_copy(w.w_input), constant_copy(w.w_hidden), constant_copy(w.b_input),
          constant_copy(w.b_hidden)};
}
}  // namespace

Classifier Classifier::frozen() const {
  GruParams g = gru_;
  g.first = constant_copy(gru_.first);
  if (gru_.second) g.second = constant_copy(*gru_.second);
  return Classifier(std::move(g), constant_copy(w_out_), constant_copy(b_out_), readout_);
}

bool Classifier::is_frozen() const {
  const auto ps = parameters();
  return std::none_of(ps.begin(), ps.end(), [](const num::Tensor& t) { return t.requires_grad(); });
}

std::vector<double> Classifier::flat_weights() const {
  std::vector<double> out;
  for (const auto& p : parameters()) {
    auto v = p.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

TrainResult train_classifier(const data::TimeSeriesDataset& d, const ClassifierConfig& mc,
                             const TrainConfig& tc) {
  if (d.samples == 0) throw std::invalid_argument("train_classifier: empty dataset");
  if (tc.batch_size == 0) throw std::invalid_argument("train_classifier: batch size must be positive");
  const bool per_step = mc.readout == Readout::per_timestep;
  if (per_step != (d.label_kind == data::LabelKind::per_timestep)) {
    throw std::invalid_argument("train_classifier: readout mode does not match dataset labels");
  }
  if (mc.input_size != d.features) {
    throw std::invalid_argument("train_classifier: model expects " + std::to_string(mc.input_size) +
                                " features, dataset has " + std::to_string(d.features));
  }
  TrainResult result{Classifier::init(mc), {}};
  if (tc.epochs == 0) return result;

  num::Adam opt(result.model.parameters(), {tc.lr});
  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(d.samples);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t rows = result.model.output_rows(d.steps);
  const std::size_t p = mc.classes;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0, batch_no = 0; start < d.samples; start += tc.batch_size, ++batch_no) {
      const std::size_t stop = std::min(start + tc.batch_size, d.samples);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      const auto B = idx.size();
      std::vector<double> target(B * rows * p, 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        const auto labels = d.labels(idx[b]);
        for (std::size_t r = 0; r < rows; ++r) {
          const auto cls = static_cast<std::size_t>(labels[r]);
          if (cls >= p) throw std::invalid_argument("train_classifier: label exceeds class count");
          target[(b * rows + r) * p + cls] = 1.0;
        }
      }
      opt.zero_grad();
      auto logits = result.model.sequence_logits(d.batch(idx));
      auto loss = num::mean(num::cross_entropy_with_logits(
          logits, num::Tensor::from({B, rows, p}, std::move(target))));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("train_classifier: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_no));
      }
      num::backward(loss);
      opt.step();
      total += value * static_cast<double>(B);
      seen += B;
    }
    result.epoch_loss.push_back(total / static_cast<double>(seen));
    spdlog::debug("classifier epoch {}/{} loss {:.5f}", epoch + 1, tc.epochs, result.epoch_loss.back());
  }
  return result;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks for ties.
  double rank_sum = 0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) rank_sum += avg_rank;
    }
    i = j;
  }
  for (int l : labels) (l == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auroc: needs both classes");
  const double P = static_cast<double>(pos), N = static_cast<double>(neg);
  return (rank_sum - P * (P + 1) / 2) / (P * N);
}

namespace {

nlohmann::json tensor_json(const num::Tensor& t) {
  return {{"shape", t.shape()}, {"data", t.to_vector()}};
}

num::Tensor tensor_from_json(const nlohmann::json& j, const std::string& name) {
  if (!j.contains(name)) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
  const auto& e = j.at(name);
  return num::Tensor::parameter(e.at("shape").get<num::Shape>(), e.at("data").get<std::vector<double>>(), name);
}

void put_weights(nlohmann::json& j, const std::string& prefix, const GruWeights& w) {
  j[prefix + ".w_input"] = tensor_json(w.w_input);
  j[prefix + ".w_hidden"] = tensor_json(w.w_hidden);
  j[prefix + ".b_input"] = tensor_json(w.b_input);
  j[prefix + ".b_hidden"] = tensor_json(w.b_hidden);
}

GruWeights get_weights(const nlohmann::json& j, const std::string& prefix) {
  return {tensor_from_json(j, prefix + ".w_input"), tensor_from_json(j, prefix + ".w_hidden"),
          tensor_from_json(j, prefix + ".b_input"), tensor_from_json(j, prefix + ".b_hidden")};
}

}  // namespace

void save_classifier(const Classifier& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "tempex-classifier";
  j["version"] = 1;
  j["input_size"] = m.input_size();
  j["hidden_size"] = m.hidden_size();
  j["classes"] = m.classes();
  j["direction"] = to_string(m.gru().direction);
  j["readout"] = to_string(m.readout());
  nlohmann::json tensors;
  put_weights(tensors, "gru.first", m.gru().first);
  if (m.gru().second) put_weights(tensors, "gru.second", *m.gru().second);
  tensors["w_out"] = tensor_json(m.readout_weight());
  tensors["b_out"] = tensor_json(m.readout_bias());
  j["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Classifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "tempex-classifier" || j.value("version", 0) != 1) {
    throw std::runtime_error("checkpoint: unsupported format in " + path.string());
  }
  GruParams g;
  g.input_size = j.at("input_size").get<std::size_t>();
  g.hidden_size = j.at("hidden_size").get<std::size_t>();
  g.direction = parse_direction(j.at("direction").get<std::string>());
  const auto& t = j.at("tensors");
  g.first = get_weights(t, "gru.first");
  if (g.direction == Direction::bidirectional) g.second = get_weights(t, "gru.second");
  return Classifier(std::move(g), tensor_from_json(t, "w_out"), tensor_from_json(t, "b_out"),
                    parse_readout(j.at("readout").get<std::string>()));
}

}  // namespace tempex::nets

#include "tempex/explainers/saliency.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <stdexcept>

namespace tempex::explain {

std::span<const double> SaliencyMap::sample(std::size_t i) const {
  if (i >= samples()) throw std::out_of_range("saliency map: sample index out of range");
  return {scores.data() + i * cells(), cells()};
}

void SaliencyMap::append(const SaliencyMap& other) {
  if (samples() == 0 && method.empty()) {
    *this = other;
    return;
  }
  if (other.method != method || other.steps != steps || other.features != features) {
    throw std::invalid_argument("saliency map: cannot append '" + other.method + "' to '" + method + "'");
  }
  sample_ids.insert(sample_ids.end(), other.sample_ids.begin(), other.sample_ids.end());
  scores.insert(scores.end(), other.scores.begin(), other.scores.end());
  raw.insert(raw.end(), other.raw.begin(), other.raw.end());
  info.insert(info.end(), other.info.begin(), other.info.end());
}

void SaliencyMap::validate() const {
  if (scores.size() != samples() * cells()) throw std::invalid_argument("saliency map: score count mismatch");
  if (!raw.empty() && raw.size() != scores.size()) throw std::invalid_argument("saliency map: raw count mismatch");
  if (!info.empty() && info.size() != samples()) throw std::invalid_argument("saliency map: info count mismatch");
}

void minmax_normalize(std::vector<double>& scores, std::size_t cells) {
  if (cells == 0) return;
  for (std::size_t start = 0; start + cells <= scores.size(); start += cells) {
    auto first = scores.begin() + static_cast<std::ptrdiff_t>(start);
    auto last = first + static_cast<std::ptrdiff_t>(cells);
    const auto [lo, hi] = std::minmax_element(first, last);
    const double a = *lo, span = *hi - *lo;
    for (auto it = first; it != last; ++it) *it = span > 0 ? (*it - a) / span : 0.0;
  }
}

void write_saliency_csv(const SaliencyMap& map, const std::filesystem::path& path) {
  map.validate();
  auto out = fmt::output_file(path.string());
  out.print("sample_id,t,feature,score\n");
  for (std::size_t s = 0; s < map.samples(); ++s) {
    const auto v = map.sample(s);
    for (std::size_t t = 0; t < map.steps; ++t)
      for (std::size_t f = 0; f < map.features; ++f)
        out.print("{},{},{},{}\n", map.sample_ids[s], t, f, v[t * map.features + f]);
  }
}

namespace {

template <typename T>
T parse_field(std::string_view s, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("saliency csv line " + std::to_string(line) + ": bad field '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

SaliencyMap read_saliency_csv(const std::filesystem::path& path, const std::string& method) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("saliency csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,t,feature,score", 0) != 0) {
    throw std::runtime_error("saliency csv: unexpected header in " + path.string());
  }
  struct Cell {
    std::size_t t, f;
    double score;
  };
  std::vector<std::size_t> order;
  std::map<std::size_t, std::vector<Cell>> rows;
  std::size_t T = 0, n = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view rest(line);
    std::string_view parts[4];
    for (int k = 0; k < 4; ++k) {
      const auto comma = k < 3 ? rest.find(',') : std::string_view::npos;
      if (k < 3 && comma == std::string_view::npos) {
        throw std::runtime_error("saliency csv line " + std::to_string(lineno) + ": expected 4 fields");
      }
      parts[k] = rest.substr(0, comma);
      if (k < 3) rest.remove_prefix(comma + 1);
    }
    const auto id = parse_field<std::size_t>(parts[0], lineno);
    Cell c{parse_field<std::size_t>(parts[1], lineno), parse_field<std::size_t>(parts[2], lineno),
           parse_field<double>(parts[3], lineno)};
    T = std::max(T, c.t + 1);
    n = std::max(n, c.f + 1);
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(c);
  }
  SaliencyMap map;
  map.method = method;
  map.steps = T;
  map.features = n;
  map.sample_ids = order;
  map.scores.assign(order.size() * T * n, 0.0);
  for (std::size_t s = 0; s < order.size(); ++s) {
    const auto& cells = rows[order[s]];
    if (cells.size() != T * n) {
      throw std::runtime_error("saliency csv: sample " + std::to_string(order[s]) + " has " +
                               std::to_string(cells.size()) + " cells, expected " + std::to_string(T * n));
    }
    for (const auto& c : cells) map.scores[s * T * n + c.t * n + c.f] = c.score;
  }
  return map;
}

}  // namespace tempex::explain

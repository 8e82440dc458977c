#include "tempex/datagen/csv.hpp"

#include <boost/tokenizer.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace tempex::data {

namespace {

using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

std::vector<std::string> split_row(const std::string& line) {
  std::string trimmed = line;
  if (!trimmed.empty() && trimmed.back() == '\r') trimmed.pop_back();
  Tokenizer tok(trimmed);
  std::vector<std::string> out;
  for (auto& cell : tok) out.push_back(cell);
  return out;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, std::size_t line, const std::string& column) {
  const auto s = strip(raw);
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("csv line " + std::to_string(line) + ": column '" + column +
                             "' is not a number: '" + s + "'");
  }
  return v;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::runtime_error("csv: missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

TimeSeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path.string());
  std::vector<std::string> header;
  for (auto& h : split_row(line)) header.push_back(strip(h));

  const auto id_col = column_index(header, schema.sample_column);
  const auto t_col = column_index(header, schema.time_column);
  const auto y_col = column_index(header, schema.label_column);
  std::vector<std::string> feature_names = schema.feature_columns;
  if (feature_names.empty()) {
    for (const auto& h : header) {
      if (h != schema.sample_column && h != schema.time_column && h != schema.label_column) {
        feature_names.push_back(h);
      }
    }
  }
  if (feature_names.empty()) throw std::runtime_error("csv: no feature columns");
  std::vector<std::size_t> f_cols;
  for (const auto& f : feature_names) f_cols.push_back(column_index(header, f));

  struct Row {
    long time;
    std::vector<double> values;
    int label;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    }
    const auto id = strip(cells[id_col]);
    const double t = parse_number(cells[t_col], line_no, schema.time_column);
    const double y = parse_number(cells[y_col], line_no, schema.label_column);
    if (std::isnan(t) || std::isnan(y)) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": time and label are required");
    }
    if (y != 0.0 && y != 1.0) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    Row r{static_cast<long>(t), {}, static_cast<int>(y)};
    for (std::size_t k = 0; k < f_cols.size(); ++k) {
      r.values.push_back(parse_number(cells[f_cols[k]], line_no, feature_names[k]));
    }
    auto [it, fresh] = rows.try_emplace(id);
    if (fresh) order.push_back(id);
    it->second.push_back(std::move(r));
  }
  if (order.empty()) throw std::runtime_error("csv: no data rows in " + path.string());

  // Every sample must cover exactly 0..T-1 once, with the same T.
  for (auto& [id, rs] : rows) {
    std::sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.time < b.time; });
  }
  const std::size_t T = rows.at(order.front()).size();
  std::vector<std::string> ragged;
  for (const auto& id : order) {
    const auto& rs = rows.at(id);
    bool ok = rs.size() == T;
    for (std::size_t k = 0; ok && k < rs.size(); ++k) ok = rs[k].time == static_cast<long>(k);
    if (!ok) ragged.push_back(id);
  }
  if (!ragged.empty()) {
    std::ostringstream msg;
    msg << "csv: ragged time indices (expected 0.." << (T - 1) << ") in samples:";
    for (const auto& id : ragged) msg << ' ' << id;
    throw std::runtime_error(msg.str());
  }

  TimeSeriesDataset d;
  d.samples = order.size();
  d.steps = T;
  d.features = feature_names.size();
  d.feature_names = feature_names;
  d.label_kind = schema.label_kind;
  for (const auto& id : order) {
    const auto& rs = rows.at(id);
    for (const auto& r : rs) {
      d.x.insert(d.x.end(), r.values.begin(), r.values.end());
      if (schema.label_kind == LabelKind::per_timestep) d.y.push_back(r.label);
    }
    if (schema.label_kind == LabelKind::per_sequence) d.y.push_back(rs.back().label);
  }
  return d;
}

TimeSeriesDataset impute_forward_fill(TimeSeriesDataset d, const std::vector<double>& defaults) {
  if (!defaults.empty() && defaults.size() != d.features) {
    throw std::invalid_argument("impute: expected " + std::to_string(d.features) +
                                " default values, got " + std::to_string(defaults.size()));
  }
  for (std::size_t i = 0; i < d.samples; ++i) {
    auto s = d.sample(i);
    for (std::size_t f = 0; f < d.features; ++f) {
      double last = defaults.empty() ? 0.0 : defaults[f];
      for (std::size_t t = 0; t < d.steps; ++t) {
        double& v = s[t * d.features + f];
        if (std::isnan(v)) {
          v = last;
        } else {
          last = v;
        }
      }
    }
  }
  return d;
}

}  // namespace tempex::data

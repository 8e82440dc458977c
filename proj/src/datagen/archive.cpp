#include "tempex/datagen/archive.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <json.hpp>
#include <memory>
#include <stdexcept>

namespace tempex::data {

namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");

constexpr char kMagic[8] = {'T', 'P', 'X', 'D', 'S', 'E', 'T', '1'};
constexpr int kVersion = 1;

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

GzHandle open(const std::filesystem::path& path, const char* mode) {
  GzHandle f(gzopen(path.string().c_str(), mode));
  if (!f) throw std::runtime_error("archive: cannot open " + path.string());
  return f;
}

void write_bytes(gzFile f, const void* data, std::size_t n) {
  const auto* p = static_cast<const char*>(data);
  while (n > 0) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
    if (gzwrite(f, p, chunk) != static_cast<int>(chunk)) throw std::runtime_error("archive: write failed");
    p += chunk;
    n -= chunk;
  }
}

void read_bytes(gzFile f, void* data, std::size_t n) {
  auto* p = static_cast<char*>(data);
  while (n > 0) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
    if (gzread(f, p, chunk) != static_cast<int>(chunk)) throw std::runtime_error("archive: truncated file");
    p += chunk;
    n -= chunk;
  }
}

}  // namespace

void save_archive(const TimeSeriesDataset& d, const std::filesystem::path& path) {
  d.validate();
  nlohmann::json h;
  h["format"] = "tempex-dataset";
  h["version"] = kVersion;
  h["samples"] = d.samples;
  h["steps"] = d.steps;
  h["features"] = d.features;
  h["label_kind"] = to_string(d.label_kind);
  h["seed"] = d.seed;
  h["feature_names"] = d.feature_names;
  h["has_truth"] = d.has_truth();
  h["has_states"] = !d.states.empty();
  const std::string header = h.dump();

  auto f = open(path, "wb6");
  write_bytes(f.get(), kMagic, sizeof kMagic);
  const std::uint64_t len = header.size();
  write_bytes(f.get(), &len, sizeof len);
  write_bytes(f.get(), header.data(), header.size());
  write_bytes(f.get(), d.x.data(), d.x.size() * sizeof(double));
  std::vector<std::int32_t> y(d.y.begin(), d.y.end());
  write_bytes(f.get(), y.data(), y.size() * sizeof(std::int32_t));
  if (d.has_truth()) write_bytes(f.get(), d.true_saliency.data(), d.true_saliency.size());
  if (!d.states.empty()) {
    std::vector<std::int32_t> s(d.states.begin(), d.states.end());
    write_bytes(f.get(), s.data(), s.size() * sizeof(std::int32_t));
  }
}

TimeSeriesDataset load_archive(const std::filesystem::path& path) {
  auto f = open(path, "rb");
  char magic[8];
  read_bytes(f.get(), magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("archive: " + path.string() + " is not a dataset archive");
  }
  std::uint64_t len = 0;
  read_bytes(f.get(), &len, sizeof len);
  if (len > (1u << 28)) throw std::runtime_error("archive: implausible header length");
  std::string header(len, '\0');
  read_bytes(f.get(), header.data(), len);
  const auto h = nlohmann::json::parse(header);
  if (h.at("format") != "tempex-dataset" || h.at("version").get<int>() != kVersion) {
    throw std::runtime_error("archive: unsupported format/version");
  }
  TimeSeriesDataset d;
  d.samples = h.at("samples").get<std::size_t>();
  d.steps = h.at("steps").get<std::size_t>();
  d.features = h.at("features").get<std::size_t>();
  d.label_kind = parse_label_kind(h.at("label_kind").get<std::string>());
  d.seed = h.at("seed").get<std::uint64_t>();
  d.feature_names = h.at("feature_names").get<std::vector<std::string>>();
  d.x.resize(d.samples * d.steps * d.features);
  read_bytes(f.get(), d.x.data(), d.x.size() * sizeof(double));
  std::vector<std::int32_t> y(d.samples * d.labels_per_sample());
  read_bytes(f.get(), y.data(), y.size() * sizeof(std::int32_t));
  d.y.assign(y.begin(), y.end());
  if (h.at("has_truth").get<bool>()) {
    d.true_saliency.resize(d.x.size());
    read_bytes(f.get(), d.true_saliency.data(), d.true_saliency.size());
  }
  if (h.at("has_states").get<bool>()) {
    std::vector<std::int32_t> s(d.samples * d.steps);
    read_bytes(f.get(), s.data(), s.size() * sizeof(std::int32_t));
    d.states.assign(s.begin(), s.end());
  }
  d.validate();
  return d;
}

}  // namespace tempex::data

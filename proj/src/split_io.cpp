#include "craft/split_io.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace craft {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kNegMagic[8] = {'C', 'R', 'A', 'F', 'T', 'N', 'E', 'G'};
constexpr std::uint32_t kNegVersion = 1;

template <typename V>
void put(std::ofstream& out, V v) {
  static_assert(std::is_trivially_copyable_v<V>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V take(std::ifstream& in, const fs::path& path) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw DataError("negative cache " + path.string() + " is truncated");
  return v;
}

}  // namespace

SplitManifest make_split_manifest(std::span<const TemporalEdge> edges, const SplitFractions& f,
                                  const std::string& dataset_checksum) {
  SplitManifest m;
  m.fractions = f;
  m.bounds = split_boundaries(edges.size(), f);
  m.dataset_checksum = dataset_checksum;
  if (m.bounds.train_end < edges.size()) m.val_start_time = edges[m.bounds.train_end].t;
  if (m.bounds.val_end < edges.size()) m.test_start_time = edges[m.bounds.val_end].t;
  return m;
}

void write_split_manifest(const SplitManifest& m, const fs::path& path) {
  const json j = {
      {"fractions", {{"train", m.fractions.train}, {"val", m.fractions.val}, {"test", m.fractions.test}}},
      {"train_end", m.bounds.train_end},
      {"val_end", m.bounds.val_end},
      {"total", m.bounds.total},
      {"val_start_time", m.val_start_time},
      {"test_start_time", m.test_start_time},
      {"dataset_checksum", m.dataset_checksum},
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

SplitManifest read_split_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split manifest " + path.string());
  try {
    const json j = json::parse(in);
    SplitManifest m;
    m.fractions.train = j.at("fractions").at("train").get<double>();
    m.fractions.val = j.at("fractions").at("val").get<double>();
    m.fractions.test = j.at("fractions").at("test").get<double>();
    m.bounds.train_end = j.at("train_end").get<std::size_t>();
    m.bounds.val_end = j.at("val_end").get<std::size_t>();
    m.bounds.total = j.at("total").get<std::size_t>();
    m.val_start_time = j.at("val_start_time").get<Timestamp>();
    m.test_start_time = j.at("test_start_time").get<Timestamp>();
    m.dataset_checksum = j.at("dataset_checksum").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw DataError("split manifest " + path.string() + ": " + e.what());
  }
}

NegativeCache make_negative_cache(const NeighborIndex& index, const EdgeSplit& split,
                                  std::uint64_t seed, std::size_t q,
                                  const std::string& dataset_checksum) {
  NegativeCache c;
  c.seed = seed;
  c.q = q;
  c.dataset_checksum = dataset_checksum;
  Rng val_rng = make_rng(seed, {static_cast<std::uint64_t>(Stream::kValNegatives)});
  Rng test_rng = make_rng(seed, {static_cast<std::uint64_t>(Stream::kTestNegatives)});
  c.val = make_eval_queries(val_rng, split.val, index, q, Phase::kVal);
  c.test = make_eval_queries(test_rng, split.test, index, q, Phase::kTest);
  return c;
}

void write_negative_cache(const NegativeCache& cache, const fs::path& path) {
  if (cache.dataset_checksum.size() != 64) {
    throw std::invalid_argument("negative cache needs a 64-character checksum");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kNegMagic, sizeof(kNegMagic));
  put(out, kNegVersion);
  put(out, cache.seed);
  put(out, static_cast<std::uint32_t>(cache.q));
  out.write(cache.dataset_checksum.data(), 64);
  put(out, static_cast<std::uint64_t>(cache.val.size() + cache.test.size()));
  for (const auto* list : {&cache.val, &cache.test}) {
    for (const auto& qr : *list) {
      if (qr.negatives.size() != cache.q) {
        throw std::invalid_argument("negative cache query has the wrong negative count");
      }
      put(out, static_cast<std::uint8_t>(qr.phase));
      put(out, qr.s);
      put(out, qr.t);
      put(out, qr.d_pos);
      for (NodeId n : qr.negatives) put(out, n);
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

NegativeCache read_negative_cache(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open negative cache " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kNegMagic, sizeof(magic)) != 0) {
    throw DataError(path.string() + " is not a negative cache");
  }
  if (take<std::uint32_t>(in, path) != kNegVersion) {
    throw DataError("negative cache " + path.string() + " has an unsupported version");
  }
  NegativeCache c;
  c.seed = take<std::uint64_t>(in, path);
  c.q = take<std::uint32_t>(in, path);
  c.dataset_checksum.resize(64);
  in.read(c.dataset_checksum.data(), 64);
  const auto count = take<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    RankingQuery qr;
    const auto phase = take<std::uint8_t>(in, path);
    if (phase != static_cast<std::uint8_t>(Phase::kVal) && phase != static_cast<std::uint8_t>(Phase::kTest)) {
      throw DataError("negative cache " + path.string() + " has an invalid phase tag");
    }
    qr.phase = static_cast<Phase>(phase);
    qr.s = take<NodeId>(in, path);
    qr.t = take<Timestamp>(in, path);
    qr.d_pos = take<NodeId>(in, path);
    qr.negatives.resize(c.q);
    for (auto& n : qr.negatives) n = take<NodeId>(in, path);
    (qr.phase == Phase::kVal ? c.val : c.test).push_back(std::move(qr));
  }
  return c;
}

}  // namespace craft

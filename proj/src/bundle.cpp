#include "craft/bundle.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace craft {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  if (line.find(',') != std::string_view::npos) {
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      out.push_back(trim(line.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t b = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

std::optional<Timestamp> parse_time(std::string_view s) {
  Timestamp v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v < 0) return std::nullopt;
  return v;
}

class IdMap {
 public:
  NodeId get(std::string_view id) {
    const auto [it, fresh] = index_.try_emplace(std::string(id), static_cast<NodeId>(names_.size()));
    if (fresh) names_.emplace_back(id);
    return it->second;
  }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, NodeId> index_;
  std::vector<std::string> names_;
};

void check_declared(const std::optional<std::size_t>& declared, std::size_t observed,
                    const char* what) {
  if (declared && *declared != observed) {
    throw DataError(std::string("meta declares ") + std::to_string(*declared) + " " + what +
                    " but the edge file has " + std::to_string(observed));
  }
}

}  // namespace

EdgeFileMeta read_edge_file_meta(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError("meta file " + path.string() + ": " + e.what());
  }
  EdgeFileMeta m;
  m.bipartite = j.value("bipartite", false);
  if (j.contains("num_sources")) m.num_sources = j.at("num_sources").get<std::size_t>();
  if (j.contains("num_destinations")) m.num_destinations = j.at("num_destinations").get<std::size_t>();
  if (j.contains("num_nodes")) m.num_nodes = j.at("num_nodes").get<std::size_t>();
  return m;
}

Dataset parse_edges(std::istream& in, const EdgeFileMeta& meta) {
  struct Raw {
    NodeId src, dst;
    Timestamp t;
  };
  IdMap sources, destinations;
  IdMap& shared = sources;
  std::vector<Raw> raw;
  std::string line;
  std::size_t line_no = 0;
  bool seen_record = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split_fields(body);
    const bool well_formed = fields.size() == 3 && !fields[0].empty() && !fields[1].empty();
    const auto t = well_formed ? parse_time(fields[2]) : std::nullopt;
    if (!t) {
      const bool numeric_like = fields.size() == 3 && fields[2].find_first_of("0123456789+-.") != std::string_view::npos;
      if (!seen_record && raw.empty() && fields.size() == 3 && !numeric_like) {
        seen_record = true;  // header line
        continue;
      }
      throw DataError("malformed edge record at line " + std::to_string(line_no) + ": '" +
                      std::string(body) + "'");
    }
    seen_record = true;
    if (!raw.empty() && *t < raw.back().t) {
      throw DataError("timestamp regression at ordinal " + std::to_string(raw.size()) + " (line " +
                      std::to_string(line_no) + "): " + std::to_string(*t) + " < " +
                      std::to_string(raw.back().t));
    }
    if (meta.bipartite) {
      raw.push_back({sources.get(fields[0]), destinations.get(fields[1]), *t});
    } else {
      const NodeId s = shared.get(fields[0]);
      raw.push_back({s, shared.get(fields[1]), *t});
    }
  }

  Dataset data;
  if (meta.bipartite) {
    check_declared(meta.num_sources, sources.size(), "sources");
    check_declared(meta.num_destinations, destinations.size(), "destinations");
    const std::size_t n_src = sources.size();
    data.meta = {n_src + destinations.size(), true, n_src};
    data.original_ids = sources.names();
    data.original_ids.insert(data.original_ids.end(), destinations.names().begin(),
                             destinations.names().end());
    for (auto& r : raw) r.dst += static_cast<NodeId>(n_src);
  } else {
    check_declared(meta.num_nodes, shared.size(), "nodes");
    data.meta = {shared.size(), false, 0};
    data.original_ids = shared.names();
  }
  data.edges.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) data.edges.push_back({raw[i].src, raw[i].dst, raw[i].t, i});
  data.checksum = sha256_hex(canonical_edges_csv(data.edges));
  return data;
}

Dataset ingest_edge_file(const fs::path& edge_file, const fs::path& meta_file) {
  const EdgeFileMeta meta = meta_file.empty() ? EdgeFileMeta{} : read_edge_file_meta(meta_file);
  std::ifstream in(edge_file);
  if (!in) throw DataError("cannot open edge file " + edge_file.string());
  return parse_edges(in, meta);
}

std::string canonical_edges_csv(const std::vector<TemporalEdge>& edges) {
  std::string out = "src,dst,t\n";
  out.reserve(out.size() + edges.size() * 20);
  for (const auto& e : edges) {
    out += std::to_string(e.src);
    out += ',';
    out += std::to_string(e.dst);
    out += ',';
    out += std::to_string(e.t);
    out += '\n';
  }
  return out;
}

void write_bundle(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string edges = canonical_edges_csv(data.edges);
  std::string nodes = "dense_id,original_id\n";
  for (std::size_t i = 0; i < data.original_ids.size(); ++i) {
    nodes += std::to_string(i) + "," + data.original_ids[i] + "\n";
  }
  const json manifest = {{"format", "craft-bundle"},
                         {"version", 1},
                         {"num_nodes", data.meta.num_nodes},
                         {"num_edges", data.edges.size()},
                         {"bipartite", data.meta.bipartite},
                         {"num_sources", data.meta.num_sources},
                         {"checksum", sha256_hex(edges)},
                         {"nodes_checksum", sha256_hex(nodes)}};
  write_file(dir / "edges.csv", edges);
  write_file(dir / "nodes.csv", nodes);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_bundle(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw DataError("bundle manifest in " + dir.string() + ": " + e.what());
  }
  const std::string edges_text = read_file(dir / "edges.csv");
  Dataset data;
  data.checksum = sha256_hex(edges_text);
  if (data.checksum != manifest.at("checksum").get<std::string>()) {
    throw DataError("bundle " + dir.string() + " fails its checksum");
  }
  data.meta.num_nodes = manifest.at("num_nodes").get<std::size_t>();
  data.meta.bipartite = manifest.at("bipartite").get<bool>();
  data.meta.num_sources = manifest.at("num_sources").get<std::size_t>();

  std::istringstream in(edges_text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = split_fields(line);
    TemporalEdge e;
    std::from_chars(f[0].data(), f[0].data() + f[0].size(), e.src);
    std::from_chars(f[1].data(), f[1].data() + f[1].size(), e.dst);
    std::from_chars(f[2].data(), f[2].data() + f[2].size(), e.t);
    e.ord = data.edges.size();
    data.edges.push_back(e);
  }
  if (data.edges.size() != manifest.at("num_edges").get<std::size_t>()) {
    throw DataError("bundle " + dir.string() + " edge count differs from its manifest");
  }

  std::istringstream nodes(read_file(dir / "nodes.csv"));
  std::getline(nodes, line);
  while (std::getline(nodes, line)) {
    const auto comma = line.find(',');
    data.original_ids.push_back(line.substr(comma + 1));
  }
  return data;
}

}  // namespace craft

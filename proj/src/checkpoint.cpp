#include "craft/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "craft/types.hpp"

namespace craft {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'R', 'A', 'F', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

struct RawCheckpoint {
  json header;
  std::string payload;
};

RawCheckpoint read_raw(const fs::path& path, bool with_payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw DataError(path.string() + " is not a checkpoint");
  if (version != kVersion) throw DataError("checkpoint " + path.string() + " has an unsupported version");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint " + path.string() + " is truncated");
  RawCheckpoint raw{json::parse(header), {}};
  if (with_payload) {
    raw.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return raw;
}

CheckpointInfo info_from_header(const json& h) {
  CheckpointInfo info;
  info.config = h.at("config");
  info.model = model_config_from_json(h.at("model"));
  info.fingerprint = h.at("fingerprint").get<std::string>();
  info.dataset_checksum = h.at("dataset_checksum").get<std::string>();
  info.seed = h.at("seed").get<std::uint64_t>();
  info.epoch = h.at("epoch").get<std::size_t>();
  info.dtype = h.at("dtype").get<std::string>();
  return info;
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return {{"num_nodes", c.num_nodes},
          {"d", c.d},
          {"heads", c.heads},
          {"layers", c.layers},
          {"k", c.k},
          {"ffn_width", c.ffn_width},
          {"p_hidden", c.p_hidden},
          {"p_attn", c.p_attn},
          {"p_emb", c.p_emb},
          {"use_repeat", c.use_repeat},
          {"use_elapsed", c.use_elapsed},
          {"use_positional", c.use_positional},
          {"positional_mode", c.positional_mode == PositionalMode::kTimeInterval ? "time-interval" : "position"}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.num_nodes = j.at("num_nodes").get<std::size_t>();
  c.d = j.at("d").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.k = j.at("k").get<std::size_t>();
  c.ffn_width = j.at("ffn_width").get<std::size_t>();
  c.p_hidden = j.at("p_hidden").get<double>();
  c.p_attn = j.at("p_attn").get<double>();
  c.p_emb = j.at("p_emb").get<double>();
  c.use_repeat = j.at("use_repeat").get<bool>();
  c.use_elapsed = j.at("use_elapsed").get<bool>();
  c.use_positional = j.at("use_positional").get<bool>();
  c.positional_mode = j.at("positional_mode").get<std::string>() == "time-interval"
                          ? PositionalMode::kTimeInterval
                          : PositionalMode::kPosition;
  return c;
}

template <typename T>
void save_checkpoint(const fs::path& path, const CraftModel<T>& model, const CheckpointInfo& info) {
  json arrays = json::array();
  std::uint64_t offset = 0;
  for (const auto* p : model.parameters()) {
    const std::uint64_t bytes = p->value.size() * sizeof(T);
    arrays.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  const json header = {{"config", info.config},
                       {"model", model_config_to_json(model.config())},
                       {"fingerprint", info.fingerprint},
                       {"dataset_checksum", info.dataset_checksum},
                       {"seed", info.seed},
                       {"epoch", info.epoch},
                       {"dtype", dtype_name<T>()},
                       {"arrays", arrays}};
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(len));
    for (const auto* p : model.parameters()) {
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(T)));
    }
    if (!out) throw DataError("write failed for checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  return info_from_header(read_raw(path, false).header);
}

template <typename T>
CraftModel<T> load_checkpoint(const fs::path& path, CheckpointInfo* info) {
  const RawCheckpoint raw = read_raw(path, true);
  CheckpointInfo meta = info_from_header(raw.header);
  if (meta.dtype != dtype_name<T>()) {
    throw DataError("checkpoint " + path.string() + " stores " + meta.dtype + " parameters, expected " +
                    dtype_name<T>());
  }
  CraftModel<T> model(meta.model, 0);
  for (const auto& a : raw.header.at("arrays")) {
    auto& p = model.param(a.at("name").get<std::string>());
    const auto shape = a.at("shape").get<nn::Shape>();
    const auto offset = a.at("offset").get<std::uint64_t>();
    const auto bytes = a.at("bytes").get<std::uint64_t>();
    if (shape != p.value.shape() || bytes != p.value.size() * sizeof(T) ||
        offset + bytes > raw.payload.size()) {
      throw DataError("checkpoint array '" + p.name + "' does not match the model layout");
    }
    std::memcpy(p.value.data(), raw.payload.data() + offset, bytes);
  }
  if (info) *info = std::move(meta);
  return model;
}

template void save_checkpoint<float>(const fs::path&, const CraftModel<float>&, const CheckpointInfo&);
template void save_checkpoint<double>(const fs::path&, const CraftModel<double>&, const CheckpointInfo&);
template CraftModel<float> load_checkpoint<float>(const fs::path&, CheckpointInfo*);
template CraftModel<double> load_checkpoint<double>(const fs::path&, CheckpointInfo*);

}  // namespace craft

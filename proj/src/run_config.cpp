#include "craft/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "craft/bundle.hpp"

namespace craft {

using nlohmann::json;

std::string to_string(Precision p) { return p == Precision::kDouble ? "double" : "single"; }

Precision precision_from_string(const std::string& s) {
  if (s == "single") return Precision::kSingle;
  if (s == "double") return Precision::kDouble;
  throw std::invalid_argument("precision must be 'single' or 'double', got '" + s + "'");
}

namespace {

std::string loss_name(LossKind k) { return k == LossKind::kBce ? "bce" : "bpr"; }

LossKind loss_from_string(const std::string& s) {
  if (s == "bpr") return LossKind::kBpr;
  if (s == "bce") return LossKind::kBce;
  throw std::invalid_argument("loss must be 'bpr' or 'bce', got '" + s + "'");
}

std::string mode_name(PositionalMode m) {
  return m == PositionalMode::kTimeInterval ? "time-interval" : "position";
}

PositionalMode mode_from_string(const std::string& s) {
  if (s == "position") return PositionalMode::kPosition;
  if (s == "time-interval") return PositionalMode::kTimeInterval;
  throw std::invalid_argument("positional_mode must be 'position' or 'time-interval', got '" + s + "'");
}

template <typename V>
void read(const json& j, const char* key, V& into) {
  if (j.contains(key)) into = j.at(key).get<V>();
}

}  // namespace

json RunConfig::to_json() const {
  return {
      {"dataset", dataset.string()},
      {"split", {{"train", split.train}, {"val", split.val}, {"test", split.test}}},
      {"model",
       {{"d", model.d},
        {"heads", model.heads},
        {"layers", model.layers},
        {"k", model.k},
        {"ffn_width", model.ffn_width},
        {"p_hidden", model.p_hidden},
        {"p_attn", model.p_attn},
        {"p_emb", model.p_emb},
        {"use_repeat", model.use_repeat},
        {"use_elapsed", model.use_elapsed},
        {"use_positional", model.use_positional},
        {"positional_mode", mode_name(model.positional_mode)}}},
      {"optimizer", {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
      {"loss", loss_name(loss)},
      {"seed", seed},
      {"max_epochs", max_epochs},
      {"patience", patience},
      {"batch_size", batch_size},
      {"eval_batch_size", eval_batch_size},
      {"q_eval", q_eval},
      {"out", out.string()},
      {"precision", to_string(precision)},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  static const std::vector<std::string> known{
      "dataset", "split", "model", "optimizer", "loss", "seed", "max_epochs", "patience",
      "batch_size", "eval_batch_size", "q_eval", "out", "precision"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  RunConfig c;
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
  if (j.contains("split")) {
    const auto& s = j.at("split");
    read(s, "train", c.split.train);
    read(s, "val", c.split.val);
    read(s, "test", c.split.test);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    read(m, "d", c.model.d);
    read(m, "heads", c.model.heads);
    read(m, "layers", c.model.layers);
    read(m, "k", c.model.k);
    read(m, "ffn_width", c.model.ffn_width);
    read(m, "p_hidden", c.model.p_hidden);
    read(m, "p_attn", c.model.p_attn);
    read(m, "p_emb", c.model.p_emb);
    read(m, "use_repeat", c.model.use_repeat);
    read(m, "use_elapsed", c.model.use_elapsed);
    read(m, "use_positional", c.model.use_positional);
    if (m.contains("positional_mode")) {
      c.model.positional_mode = mode_from_string(m.at("positional_mode").get<std::string>());
    }
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    read(o, "lr", c.adam.lr);
    read(o, "beta1", c.adam.beta1);
    read(o, "beta2", c.adam.beta2);
    read(o, "eps", c.adam.eps);
  }
  if (j.contains("loss")) c.loss = loss_from_string(j.at("loss").get<std::string>());
  read(j, "seed", c.seed);
  read(j, "max_epochs", c.max_epochs);
  read(j, "patience", c.patience);
  read(j, "batch_size", c.batch_size);
  read(j, "eval_batch_size", c.eval_batch_size);
  read(j, "q_eval", c.q_eval);
  if (j.contains("out")) c.out = j.at("out").get<std::string>();
  if (j.contains("precision")) c.precision = precision_from_string(j.at("precision").get<std::string>());
  return c;
}

std::string RunConfig::fingerprint() const {
  json j = to_json();
  j.erase("out");
  return sha256_hex(j.dump());
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  try {
    return RunConfig::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw std::invalid_argument("config file " + path.string() + ": " + e.what());
  }
}

RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides) {
  json j = base.to_json();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("override '" + o + "' is not of the form key=value");
    }
    const json::json_pointer ptr("/" + o.substr(0, eq));
    if (!j.contains(ptr)) throw std::invalid_argument("override names unknown key '" + o.substr(0, eq) + "'");
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    j[ptr] = value;
  }
  return RunConfig::from_json(j);
}

}  // namespace craft

#include "craft/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "craft/checkpoint.hpp"

namespace craft {

namespace fs = std::filesystem;
using nlohmann::json;

PreparedData prepare_data(Dataset data, const SplitFractions& fractions, std::uint64_t seed,
                          std::size_t q_eval) {
  PreparedData p;
  p.index = NeighborIndex::build(data.edges, data.meta);
  p.split = chronological_split(data.edges, fractions);
  p.negatives = make_negative_cache(p.index, p.split, seed, q_eval, data.checksum);
  p.data = std::move(data);
  return p;
}

namespace {

std::ofstream open_truncated(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

json config_without_out(const RunConfig& c) {
  json j = c.to_json();
  j.erase("out");
  return j;
}

template <typename T>
RunResult run_typed(const PreparedData& prepared, const RunConfig& config,
                    const TrainArtifacts& artifacts) {
  ModelConfig mc = config.model;
  mc.num_nodes = prepared.data.meta.num_nodes;
  CraftModel<T> model(mc, config.seed);

  FitOptions fo;
  fo.max_epochs = config.max_epochs;
  fo.patience = config.patience;
  fo.batch_size = config.batch_size;
  fo.eval_batch_size = config.eval_batch_size;
  fo.loss = config.loss;
  fo.adam = config.adam;
  fo.seed = config.seed;

  const std::string fingerprint = config.fingerprint();
  std::ofstream metrics, timing;
  if (!artifacts.metrics.empty()) metrics = open_truncated(artifacts.metrics);
  if (!artifacts.timing.empty()) timing = open_truncated(artifacts.timing);
  const auto on_epoch = [&](const EpochRecord& r) {
    if (metrics.is_open()) {
      metrics << json{{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"val_mrr", r.val_mrr},
                      {"skipped_cold_sources", r.skipped_cold_sources},
                      {"seed", config.seed},
                      {"fingerprint", fingerprint}}
                     .dump()
              << "\n"
              << std::flush;
    }
    if (timing.is_open()) {
      timing << json{{"epoch", r.epoch}, {"wall_ms", r.wall_ms}}.dump() << "\n" << std::flush;
    }
  };

  RunResult result;
  result.fit = fit(model, prepared.index, prepared.split.train, prepared.negatives.val, fo, on_epoch);

  ModelScorer<T> scorer(model);
  result.val = evaluate(scorer, prepared.index, prepared.negatives.val, config.eval_batch_size);
  result.test = evaluate(scorer, prepared.index, prepared.negatives.test, config.eval_batch_size);
  for (auto* r : {&result.val, &result.test}) {
    r->fingerprint = fingerprint;
    r->seed = config.seed;
  }

  if (!artifacts.checkpoint.empty()) {
    CheckpointInfo info;
    info.config = config_without_out(config);
    info.fingerprint = fingerprint;
    info.dataset_checksum = prepared.data.checksum;
    info.seed = config.seed;
    info.epoch = result.fit.best_epoch;
    save_checkpoint(artifacts.checkpoint, model, info);
  }
  return result;
}

template <typename T>
EvalReport evaluate_typed(const fs::path& path, const PreparedData& prepared, Phase phase,
                          std::size_t batch_size) {
  CheckpointInfo info;
  CraftModel<T> model = load_checkpoint<T>(path, &info);
  if (model.config().num_nodes != prepared.data.meta.num_nodes) {
    throw DataError("checkpoint node count differs from the dataset");
  }
  ModelScorer<T> scorer(model);
  EvalReport r = evaluate(scorer, prepared.index,
                          phase == Phase::kVal ? prepared.negatives.val : prepared.negatives.test,
                          batch_size);
  r.fingerprint = info.fingerprint;
  r.seed = info.seed;
  return r;
}

}  // namespace

RunResult run_training(const PreparedData& prepared, const RunConfig& config,
                       const TrainArtifacts& artifacts) {
  if (config.precision == Precision::kDouble) return run_typed<double>(prepared, config, artifacts);
  return run_typed<float>(prepared, config, artifacts);
}

EvalReport evaluate_edgebank(const PreparedData& prepared, Phase phase, std::size_t batch_size) {
  EdgeBankScorer scorer;
  return evaluate(scorer, prepared.index,
                  phase == Phase::kVal ? prepared.negatives.val : prepared.negatives.test, batch_size);
}

EvalReport evaluate_checkpoint(const fs::path& checkpoint, const PreparedData& prepared, Phase phase,
                               std::size_t batch_size) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  if (info.dataset_checksum != prepared.data.checksum) {
    throw DataError("checkpoint was trained on dataset " + info.dataset_checksum +
                    " but the bundle has checksum " + prepared.data.checksum);
  }
  if (info.dtype == "float64") return evaluate_typed<double>(checkpoint, prepared, phase, batch_size);
  return evaluate_typed<float>(checkpoint, prepared, phase, batch_size);
}

std::vector<AblationRow> run_ablation(const PreparedData& prepared, const RunConfig& config,
                                      const AblationToggles& toggles) {
  std::vector<std::pair<std::string, RunConfig>> variants{{"base", config}};
  if (toggles.pos_enc) {
    RunConfig c = config;
    c.model.use_positional = false;
    variants.emplace_back("w/o PosEnc", c);
  }
  if (toggles.elapsed) {
    RunConfig c = config;
    c.model.use_elapsed = false;
    variants.emplace_back("w/o Elapsed", c);
  }
  if (toggles.repeat) {
    RunConfig c = config;
    c.model.use_repeat = false;
    variants.emplace_back("w/o Repeat", c);
  }
  std::vector<AblationRow> rows;
  for (const auto& [name, cfg] : variants) {
    const RunResult r = run_training(prepared, cfg);
    AblationRow row{name, r.val.mrr, r.test.mrr, 0.0, r.fit.best_epoch};
    row.delta = rows.empty() ? 0.0 : row.test_mrr - rows.front().test_mrr;
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,val_mrr,test_mrr,delta,best_epoch\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%zu\n", r.variant.c_str(), r.val_mrr, r.test_mrr,
                  r.delta, r.best_epoch);
    out << buf;
  }
  return out.str();
}

}  // namespace craft

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "craft/bench.hpp"
#include "craft/checkpoint.hpp"
#include "craft/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Shared {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string precision;
  std::vector<std::string> overrides;
};

void add_shared(CLI::App* cmd, Shared& s, bool needs_config) {
  auto* c = cmd->add_option("--config", s.config, "Run configuration JSON")->check(CLI::ExistingFile);
  if (needs_config) c->required();
  cmd->add_option("--seed", s.seed, "Random seed")->required();
  cmd->add_option("--out", s.out, "Output directory")->required();
  cmd->add_option("--precision", s.precision, "single or double")
      ->check(CLI::IsMember({"single", "double"}));
  cmd->add_option("--set", s.overrides, "Config override key=value (JSON pointer key, e.g. model/k=20)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw craft::DataError("cannot write " + path.string());
  out << text;
}

craft::RunConfig resolve_config(const Shared& s, const std::string& dataset) {
  craft::RunConfig cfg = s.config.empty() ? craft::RunConfig{} : craft::load_run_config(s.config);
  cfg = craft::apply_overrides(cfg, s.overrides);
  if (!dataset.empty()) cfg.dataset = dataset;
  cfg.seed = *s.seed;
  cfg.out = s.out;
  if (!s.precision.empty()) cfg.precision = craft::precision_from_string(s.precision);
  if (cfg.dataset.empty()) throw std::invalid_argument("no dataset given (config 'dataset' or --dataset)");
  if (!fs::is_directory(cfg.dataset)) {
    throw std::invalid_argument("dataset bundle " + cfg.dataset.string() + " does not exist");
  }
  return cfg;
}

craft::ModelConfig resolved_model(craft::ModelConfig m, const craft::PreparedData& p) {
  m.num_nodes = p.data.meta.num_nodes;
  m.validate();
  return m;
}

int cmd_ingest(const std::string& edges, const std::string& meta, const std::string& out) {
  const craft::Dataset data = craft::ingest_edge_file(edges, meta);
  craft::write_bundle(data, out);
  std::cout << "ingested " << data.edges.size() << " edges over " << data.meta.num_nodes
            << " nodes; checksum " << data.checksum << "\n";
  return 0;
}

void write_split_files(const craft::PreparedData& prepared, const craft::SplitFractions& f, const fs::path& out) {
  craft::write_split_manifest(craft::make_split_manifest(prepared.data.edges, f, prepared.data.checksum),
                              out / "split.json");
  craft::write_negative_cache(prepared.negatives, out / "negatives.bin");
}

int cmd_split(const std::string& dataset, std::uint64_t seed, const std::string& out,
              const craft::SplitFractions& f, std::size_t q) {
  const craft::Dataset data = craft::load_bundle(dataset);
  const auto prepared = craft::prepare_data(data, f, seed, q);
  fs::create_directories(out);
  write_split_files(prepared, f, out);
  std::cout << "train " << prepared.split.train.size() << ", validation " << prepared.split.val.size()
            << ", test " << prepared.split.test.size() << " edges\n";
  return 0;
}

int cmd_train(const Shared& s, const std::string& dataset) {
  const craft::RunConfig cfg = resolve_config(s, dataset);
  const auto prepared = craft::prepare_data(craft::load_bundle(cfg.dataset), cfg.split, cfg.seed, cfg.q_eval);
  resolved_model(cfg.model, prepared);
  const fs::path out = cfg.out;
  fs::create_directories(out);
  json resolved = cfg.to_json();
  resolved.erase("out");
  resolved["fingerprint"] = cfg.fingerprint();
  write_text(out / "config.json", resolved.dump(2) + "\n");
  write_split_files(prepared, cfg.split, out);

  craft::TrainArtifacts artifacts{out / "checkpoint.ckpt", out / "metrics.jsonl", out / "timing.jsonl"};
  const craft::RunResult r = craft::run_training(prepared, cfg, artifacts);
  json report = r.test.to_json();
  report["phase"] = "test";
  report["best_epoch"] = r.fit.best_epoch;
  report["val_mrr"] = r.val.mrr;
  write_text(out / "report.json", report.dump(2) + "\n");
  std::cout << "best epoch " << r.fit.best_epoch << ": validation MRR " << r.val.mrr << ", test MRR "
            << r.test.mrr << " (" << r.test.skipped << " cold-source queries skipped)\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dataset, std::uint64_t seed,
                 const std::string& split, std::size_t q, const std::string& out, bool edgebank) {
  const craft::CheckpointInfo info = craft::read_checkpoint_info(checkpoint);
  const craft::Dataset data = craft::load_bundle(dataset);
  if (info.dataset_checksum != data.checksum) {
    std::cerr << "error: checkpoint was trained on dataset " << info.dataset_checksum
              << " but the bundle has checksum " << data.checksum << "\n";
    return 1;
  }
  const craft::RunConfig trained = craft::RunConfig::from_json(info.config);
  const auto prepared = craft::prepare_data(data, trained.split, seed, q);
  const craft::Phase phase = split == "val" ? craft::Phase::kVal : craft::Phase::kTest;
  craft::EvalReport report = edgebank ? craft::evaluate_edgebank(prepared, phase, trained.eval_batch_size)
                                      : craft::evaluate_checkpoint(checkpoint, prepared, phase,
                                                                   trained.eval_batch_size);
  report.fingerprint = info.fingerprint;
  report.seed = seed;
  json j = report.to_json();
  j["phase"] = split;
  j["q"] = q;
  j["scorer"] = edgebank ? "edgebank" : "model";
  fs::create_directories(out);
  write_text(fs::path(out) / (edgebank ? "edgebank_report.json" : "report.json"), j.dump(2) + "\n");
  std::cout << (edgebank ? "EdgeBank" : "model") << " " << split << " MRR " << report.mrr << " over "
            << report.query_count << " queries (" << report.skipped << " skipped)\n";
  return 0;
}

int cmd_ablate(const Shared& s, const std::string& dataset, const std::vector<std::string>& variants) {
  const craft::RunConfig cfg = resolve_config(s, dataset);
  craft::AblationToggles t;
  for (const auto& v : variants) {
    if (v == "pos") t.pos_enc = true;
    else if (v == "elapsed") t.elapsed = true;
    else if (v == "repeat") t.repeat = true;
    else throw std::invalid_argument("unknown ablation variant '" + v + "' (pos, elapsed, repeat)");
  }
  const auto prepared = craft::prepare_data(craft::load_bundle(cfg.dataset), cfg.split, cfg.seed, cfg.q_eval);
  resolved_model(cfg.model, prepared);
  const auto rows = craft::run_ablation(prepared, cfg, t);
  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_text(out / "ablation.csv", craft::ablation_csv(rows));
  write_text(out / "ablation.json",
             json{{"fingerprint", cfg.fingerprint()}, {"seed", cfg.seed}}.dump(2) + "\n");
  std::cout << craft::ablation_csv(rows);
  return 0;
}

int cmd_bench(craft::BenchGrid grid, const std::string& out) {
  const auto rows = craft::bench_complexity(grid);
  fs::create_directories(out);
  const std::string csv = craft::bench_csv(rows);
  write_text(fs::path(out) / "bench.csv", csv);
  const json grid_json = {{"degrees", grid.degrees}, {"ks", grid.ks},           {"qs", grid.qs},
                          {"k_fixed", grid.k_fixed}, {"q_fixed", grid.q_fixed}, {"d", grid.d},
                          {"batch", grid.batch},     {"repeats", grid.repeats},
                          {"per_candidate_baseline", grid.per_candidate_baseline}};
  write_text(fs::path(out) / "bench.json",
             json{{"grid", grid_json}, {"fingerprint", craft::sha256_hex(grid_json.dump())}, {"seed", grid.seed}}
                     .dump(2) +
                 "\n");
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal link prediction with cross-attention over recent neighbors"};
  app.require_subcommand(1);

  std::string edges, meta, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Validate an edge file and write a dataset bundle");
  ingest->add_option("--edges", edges, "Edge file (src,dst,t per line)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--meta", meta, "Meta sidecar JSON")->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_out, "Bundle directory")->required();

  std::string split_dataset, split_out;
  std::uint64_t split_seed = 0;
  craft::SplitFractions fractions;
  std::size_t split_q = 100;
  auto* split = app.add_subcommand("split", "Write the split manifest and fixed evaluation negatives");
  split->add_option("--dataset", split_dataset, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  split->add_option("--seed", split_seed, "Random seed")->required();
  split->add_option("--out", split_out, "Output directory")->required();
  split->add_option("--train", fractions.train, "Training fraction")->capture_default_str();
  split->add_option("--val", fractions.val, "Validation fraction")->capture_default_str();
  split->add_option("--test", fractions.test, "Test fraction")->capture_default_str();
  split->add_option("--q", split_q, "Negatives per evaluation query")->capture_default_str();

  Shared train_opts;
  std::string train_dataset;
  auto* train = app.add_subcommand("train", "Train with early stopping and write checkpoint and metrics");
  add_shared(train, train_opts, false);
  train->add_option("--dataset", train_dataset, "Bundle directory (overrides the config)");

  std::string ckpt, eval_dataset, eval_split = "test", eval_out;
  std::uint64_t eval_seed = 0;
  std::size_t eval_q = 100;
  bool edgebank = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score fixed ranking queries with a checkpoint");
  evaluate->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--dataset", eval_dataset, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--seed", eval_seed, "Seed for the evaluation negatives")->required();
  evaluate->add_option("--split", eval_split, "val or test")->check(CLI::IsMember({"val", "test"}))->capture_default_str();
  evaluate->add_option("--q", eval_q, "Negatives per query")->capture_default_str();
  evaluate->add_option("--out", eval_out, "Output directory")->required();
  evaluate->add_flag("--edgebank", edgebank, "Score with the EdgeBank heuristic instead of the model");

  Shared ablate_opts;
  std::string ablate_dataset;
  std::vector<std::string> variants{"pos", "elapsed", "repeat"};
  auto* ablate = app.add_subcommand("ablate", "Train the base model and single-component removals");
  add_shared(ablate, ablate_opts, false);
  ablate->add_option("--dataset", ablate_dataset, "Bundle directory (overrides the config)");
  ablate->add_option("--variants", variants, "Subset of pos,elapsed,repeat")->delimiter(',')->capture_default_str();

  craft::BenchGrid grid;
  std::string bench_out;
  std::uint64_t bench_seed = 0;
  std::vector<std::size_t> degrees, ks, qs;
  bool no_baseline = false;
  auto* bench = app.add_subcommand("bench", "Time neighbor extraction and scoring across a grid");
  bench->add_option("--seed", bench_seed, "Random seed")->required();
  bench->add_option("--out", bench_out, "Output directory")->required();
  bench->add_option("--degrees", degrees, "Source degrees")->delimiter(',');
  bench->add_option("--ks", ks, "Context sizes")->delimiter(',');
  bench->add_option("--qs", qs, "Negative counts")->delimiter(',');
  bench->add_option("--k-fixed", grid.k_fixed, "k used for the q sweep")->capture_default_str();
  bench->add_option("--q-fixed", grid.q_fixed, "q used for the k sweep")->capture_default_str();
  bench->add_option("--d", grid.d, "Embedding width")->capture_default_str();
  bench->add_option("--batch", grid.batch, "Queries per scored batch")->capture_default_str();
  bench->add_option("--repeats", grid.repeats, "Timed repetitions per grid point")->capture_default_str();
  bench->add_flag("--no-baseline", no_baseline, "Skip the per-candidate aggregation baseline");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(edges, meta, ingest_out);
    if (*split) return cmd_split(split_dataset, split_seed, split_out, fractions, split_q);
    if (*train) return cmd_train(train_opts, train_dataset);
    if (*evaluate) return cmd_evaluate(ckpt, eval_dataset, eval_seed, eval_split, eval_q, eval_out, edgebank);
    if (*ablate) return cmd_ablate(ablate_opts, ablate_dataset, variants);
    if (*bench) {
      if (!degrees.empty() || !ks.empty() || !qs.empty()) {
        grid.degrees = degrees;
        grid.ks = ks;
        grid.qs = qs;
      }
      grid.per_candidate_baseline = !no_baseline;
      grid.seed = bench_seed;
      return cmd_bench(grid, bench_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "craft/bench.hpp"
#include "craft/gradcheck.hpp"
#include "craft/pipeline.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace craft;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::kPass : Status::kFail, std::move(detail)}; }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

nn::Tensor<double> random_tensor(std::mt19937_64& rng, nn::Shape shape) {
  std::normal_distribution<double> n;
  nn::Tensor<double> t(std::move(shape));
  for (auto& x : t.values()) x = n(rng);
  return t;
}

nn::Var probe(nn::Tape<double>& tape, nn::Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return tape.sum(tape.dropout_mask_apply(y, random_tensor(rng, tape.value(y).shape())));
}

ModelConfig small_config(std::size_t n, std::size_t d, std::size_t h, std::size_t layers, std::size_t k) {
  ModelConfig c;
  c.num_nodes = n;
  c.d = d;
  c.heads = h;
  c.layers = layers;
  c.k = k;
  c.p_hidden = c.p_attn = c.p_emb = 0.0;
  return c;
}

struct Fixture {
  std::vector<TemporalEdge> edges;
  NeighborIndex index;
  std::vector<RankingQuery> queries;
};

Fixture random_fixture(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t q, std::size_t count) {
  std::mt19937_64 g(seed);
  const GraphMeta meta{n, false, 0};
  Fixture f;
  f.edges = testing::random_edges(g, m, meta, static_cast<Timestamp>(m / 2));
  f.index = NeighborIndex::build(f.edges, meta);
  auto rng = make_rng(seed);
  for (auto it = f.edges.rbegin(); it != f.edges.rend() && f.queries.size() < count; ++it) {
    if (is_cold_source(f.index, it->src, it->t)) continue;
    f.queries.push_back(
        {it->src, it->t, it->dst, sample_negatives(rng, f.index, it->src, it->t, it->dst, q), Phase::kTest});
  }
  return f;
}

Outcome gradient_exactness() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(42);
  nn::ParamGroup<double> a("a", random_tensor(rng, {4, 6}));
  nn::ParamGroup<double> b("b", random_tensor(rng, {6, 3}));
  nn::ParamGroup<double> x3("x3", random_tensor(rng, {3, 2, 4}));
  nn::ParamGroup<double> y3("y3", random_tensor(rng, {3, 4, 5}));
  nn::ParamGroup<double> row("row", random_tensor(rng, {1, 6}));
  nn::ParamGroup<double> pos("pos", random_tensor(rng, {3, 3}));
  for (auto& v : pos.value.values()) v = std::abs(v) + 0.5;
  const std::vector<std::uint8_t> mask{0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 0, 1};
  const std::vector<std::int64_t> ids{3, -1, 0, 3, 1};
  const std::vector<std::uint8_t> flags{0, 1, 0, 1, 0};

  using Builder = std::function<nn::Var(nn::Tape<double>&)>;
  const std::vector<std::pair<std::string, std::pair<Builder, std::vector<nn::ParamGroup<double>*>>>> primitives{
      {"matmul", {[&](auto& t) { return probe(t, t.matmul(t.param(a), t.param(b)), 1); }, {&a, &b}}},
      {"bmm", {[&](auto& t) { return probe(t, t.bmm(t.param(x3), t.param(y3)), 2); }, {&x3, &y3}}},
      {"softmax", {[&](auto& t) { return probe(t, t.row_softmax(t.param(a), mask, 2), 3); }, {&a}}},
      {"gelu", {[&](auto& t) { return probe(t, t.gelu(t.param(a)), 4); }, {&a}}},
      {"sigmoid", {[&](auto& t) { return probe(t, t.sigmoid(t.param(a)), 5); }, {&a}}},
      {"softplus", {[&](auto& t) { return probe(t, t.softplus(t.param(a)), 6); }, {&a}}},
      {"log", {[&](auto& t) { return probe(t, t.log(t.param(pos)), 7); }, {&pos}}},
      {"add_row", {[&](auto& t) { return probe(t, t.add_row(t.param(a), t.param(row)), 8); }, {&a, &row}}},
      {"gather_select",
       {[&](auto& t) {
          return probe(t, t.select_rows(t.gather_rows(t.param(a), ids), t.param(row), flags), 9);
        },
        {&a, &row}}},
      {"heads",
       {[&](auto& t) { return probe(t, t.merge_heads(t.split_heads(t.param(a), 2, 2, 2), 2, 2), 10); }, {&a}}},
  };
  double worst_primitive = 0.0;
  std::string worst_name;
  for (const auto& [name, entry] : primitives) {
    auto params = entry.second;
    const double e = nn::grad_check(entry.first, params).max_rel_error;
    if (e >= worst_primitive) worst_primitive = e, worst_name = name;
  }

  auto f = random_fixture(15, 30, 300, 2, 4);
  auto cfg = small_config(31, 8, 2, 2, 4);
  cfg.use_repeat = true;
  CraftModel<double> model(cfg, 15);
  auto queries = f.queries;
  queries[0].negatives[1] = 30;
  const auto index = NeighborIndex::build(f.edges, {31, false, 0});
  const auto batch = assemble_batch(index, queries, 4, true);
  auto params = model.parameters();
  const auto r = nn::grad_check(
      [&](nn::Tape<double>& tape) { return ranking_loss(tape, model.forward(tape, batch), LossKind::kBpr); },
      params, {1e-4, 200, 0});
  const double secs = seconds_since(start);
  return verdict(r.max_rel_error < 1e-4 && worst_primitive < 1e-6 && secs < 60.0,
                 "pipeline max rel err " + fmt(r.max_rel_error) + " (< 1e-4), worst primitive " + worst_name +
                     " " + fmt(worst_primitive) + " (< 1e-6), " + fmt(secs) + " s");
}

Outcome attention_invariants() {
  auto f = random_fixture(5, 40, 400, 9, 20);
  const std::size_t k = 12;
  const auto batch = assemble_batch(f.index, f.queries, k, false);
  std::size_t padded_slots = 0;
  for (auto m : batch.neighbor_mask) padded_slots += m;
  double worst_sum[2] = {0.0, 0.0}, worst_pad = 0.0;
  for (int single = 0; single < 2; ++single) {
    const auto cfg = small_config(40, 16, 4, 2, k);
    std::vector<nn::Tensor<double>> caps;
    if (single) {
      CraftModel<float> m(cfg, 5);
      m.capture_attention = true;
      m.score(batch);
      for (const auto& t : m.captured_attention()) caps.push_back(t.cast<double>());
    } else {
      CraftModel<double> m(cfg, 5);
      m.capture_attention = true;
      m.score(batch);
      caps = m.captured_attention();
    }
    for (const auto& att : caps) {
      const std::size_t rows = att.size() / k, per_query = rows / batch.size;
      for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0, pad = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
          sum += att[r * k + c];
          if (batch.neighbor_mask[(r / per_query) * k + c]) pad += att[r * k + c];
        }
        worst_sum[single] = std::max(worst_sum[single], std::abs(sum - 1.0));
        worst_pad = std::max(worst_pad, pad);
      }
    }
  }

  // One unmasked key: the attention output equals that key's value row.
  CraftModel<double> model(small_config(6, 4, 2, 1, 3), 4);
  model.param("layer0.wo").value.fill(0.0);
  for (std::size_t i = 0; i < 4; ++i) model.param("layer0.wo").value(i, i) = 1.0;
  model.param("layer0.ffn_w2").value.fill(0.0);
  model.param("layer0.ffn_b2").value.fill(0.0);
  std::mt19937_64 rng(4);
  const auto dst = random_tensor(rng, {2, 4}), ctx = random_tensor(rng, {3, 4});
  const std::vector<std::uint8_t> one_key{1, 0, 1};
  nn::Tape<double> tape(false);
  model.capture_attention = true;
  const auto& out =
      tape.value(model.cross_attention(tape, tape.constant(dst), tape.constant(ctx), one_key, 1, 2));
  bool one_hot = true;
  for (std::size_t i = 0; i < model.captured_attention()[0].size(); ++i) {
    const double w = model.captured_attention()[0][i];
    one_hot = one_hot && (i % 3 == 1 ? w == 1.0 : w == 0.0);
  }
  const auto& wv = model.param("layer0.wv").value;
  double single_err = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t x = 0; x < 4; ++x) {
      double v = 0.0;
      for (std::size_t y = 0; y < 4; ++y) v += ctx(1, y) * wv(y, x);
      single_err = std::max(single_err, std::abs(out(c, x) - dst(c, x) - v));
    }
  }
  return verdict(worst_sum[0] < 1e-12 && worst_sum[1] < 1e-6 && worst_pad < 1e-12 && padded_slots > 0 &&
                     one_hot && single_err < 1e-12,
                 "row-sum error double " + fmt(worst_sum[0]) + ", single " + fmt(worst_sum[1]) +
                     ", padded mass " + fmt(worst_pad) + " over " + std::to_string(padded_slots) +
                     " padded slots, single-neighbor weight exactly 1: " + (one_hot ? "yes" : "no") +
                     ", value-row error " + fmt(single_err));
}

Outcome index_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0, leaks = 0;
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 5000)(rng);
    const bool bipartite = trial % 2 == 1;
    const std::size_t n = std::uniform_int_distribution<std::size_t>(4, 200)(rng);
    GraphMeta meta{n, bipartite, bipartite ? n / 2 : 0};
    const auto edges = testing::random_edges(rng, m, meta, static_cast<Timestamp>(m / 3 + 1));
    const NeighborIndex index = NeighborIndex::build(edges, meta);
    const auto node = std::uniform_int_distribution<NodeId>(0, static_cast<NodeId>(n - 1))(rng);
    const auto other = std::uniform_int_distribution<NodeId>(0, static_cast<NodeId>(n - 1))(rng);
    const auto t = std::uniform_int_distribution<Timestamp>(0, edges.back().t + 1)(rng);
    const auto k = std::uniform_int_distribution<std::size_t>(1, 40)(rng);

    std::vector<NeighborEvent> before;
    std::optional<Timestamp> last;
    std::size_t count = 0;
    for (const auto& e : edges) {
      if (e.t >= t) break;
      if (e.src == node) before.push_back({e.dst, e.t});
      if (e.src == node || e.dst == node) last = e.t;
      if (e.src == node && e.dst == other) ++count;
    }
    if (before.size() > k) before.erase(before.begin(), before.end() - static_cast<std::ptrdiff_t>(k));

    const auto got = index.recent_neighbors(node, t, k);
    mismatches += got != before;
    mismatches += index.last_activity(node, t) != last;
    mismatches += index.repeat_count(node, other, t) != count;
    for (const auto& ev : got) leaks += ev.t >= t;
    if (const auto la = index.last_activity(node, t)) leaks += *la >= t;
  }
  const double secs = seconds_since(start);
  return verdict(mismatches == 0 && leaks == 0 && secs < 30.0,
                 "1000 trials, " + std::to_string(mismatches) + " mismatches, " + std::to_string(leaks) +
                     " leakage violations, " + fmt(secs) + " s");
}

Outcome loss_values() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> value(-50.0, 50.0), margin(-20.0, 20.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double x = value(rng);
    worst = std::max(worst, std::abs(bpr_loss(x, x) - std::log(2.0)));
  }
  std::size_t violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const double base = value(rng);
    double lo = margin(rng), hi = margin(rng);
    if (lo > hi) std::swap(lo, hi);
    if (lo == hi) continue;
    violations += !(bpr_loss(base + hi, base) < bpr_loss(base + lo, base));
  }
  return verdict(worst < 1e-12 && violations == 0, "|bpr(x,x) - ln 2| max " + fmt(worst) + ", " +
                                                     std::to_string(violations) +
                                                     " monotonicity violations in 1000 margin pairs");
}

Outcome overfit_sanity() {
  const auto start = std::chrono::steady_clock::now();
  const auto prepared = prepare_data(testing::cycle_stream(200, 50, 5, 20, 7), {}, 1, 100);
  RunConfig cfg;
  cfg.seed = 1;
  cfg.model = small_config(0, 32, 2, 1, 8);
  cfg.adam.lr = 1e-3;
  cfg.max_epochs = 50;
  cfg.patience = 50;
  const RunResult r = run_training(prepared, cfg);
  const double secs = seconds_since(start);
  return verdict(r.test.mrr >= 0.95 && secs < 300.0,
                 "test MRR " + fmt(r.test.mrr) + " (>= 0.95) after " + std::to_string(r.fit.history.size()) +
                     " epochs, best epoch " + std::to_string(r.fit.best_epoch) + ", " + fmt(secs) + " s");
}

Outcome repeat_efficacy() {
  const auto prepared = prepare_data(testing::repeat_stream(200, 2000, 8000, 0.8, 7), {}, 3, 100);
  RunConfig cfg;
  cfg.seed = 3;
  cfg.model.d = 32;
  cfg.model.k = 8;
  cfg.adam.lr = 1e-3;
  cfg.max_epochs = 20;
  cfg.patience = 5;
  const RunResult plain = run_training(prepared, cfg);
  cfg.model.use_repeat = true;
  const RunResult with_repeat = run_training(prepared, cfg);
  const double gap = with_repeat.test.mrr - plain.test.mrr;
  return verdict(gap >= 0.10, "CRAFT-R " + fmt(with_repeat.test.mrr) + " vs CRAFT " + fmt(plain.test.mrr) +
                                  ", gap " + fmt(100.0 * gap) + " points (>= 10)");
}

std::optional<fs::path> find_uci() {
  std::vector<fs::path> candidates;
  if (const char* env = std::getenv("CRAFT_UCI_PATH")) candidates.emplace_back(env);
  candidates.emplace_back(fs::path(CRAFT_SOURCE_DIR) / "data" / "uci");
  candidates.emplace_back(fs::path(CRAFT_SOURCE_DIR) / "data" / "uci.csv");
  for (const auto& p : candidates) {
    if (fs::is_directory(p) && fs::exists(p / "manifest.json")) return p;
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

struct UciRun {
  bool available = false;
  double craft_mrr = 0.0;
  double edgebank_mrr = 0.0;
  std::string note;
};

const UciRun& uci_run() {
  static const UciRun run = [] {
    UciRun r;
    const auto path = find_uci();
    if (!path) {
      r.note = "UCI data not found (set CRAFT_UCI_PATH to an edge file or bundle)";
      return r;
    }
    const Dataset data = fs::is_directory(*path) ? load_bundle(*path) : ingest_edge_file(*path, {});
    RunConfig cfg = load_run_config(fs::path(CRAFT_SOURCE_DIR) / "configs" / "uci.json");
    cfg.seed = 0;
    const auto prepared = prepare_data(data, cfg.split, cfg.seed, cfg.q_eval);
    const RunResult result = run_training(prepared, cfg);
    r.available = true;
    r.craft_mrr = result.test.mrr;
    r.edgebank_mrr = evaluate_edgebank(prepared, Phase::kTest).mrr;
    return r;
  }();
  return run;
}

Outcome uci_mrr() {
  const auto& r = uci_run();
  if (!r.available) return {Status::kSkip, r.note};
  return verdict(r.craft_mrr >= 0.65, "CRAFT-R test MRR " + fmt(r.craft_mrr) + " (>= 0.65)");
}

Outcome uci_ordering() {
  const auto& r = uci_run();
  if (!r.available) return {Status::kSkip, r.note};
  return verdict(r.craft_mrr > r.edgebank_mrr,
                 "CRAFT-R " + fmt(r.craft_mrr) + " vs EdgeBank " + fmt(r.edgebank_mrr));
}

Outcome complexity_trends() {
  BenchGrid grid;
  grid.degrees = {1000, 1000000};
  grid.qs = {50, 100, 200, 400, 800};
  grid.per_candidate_baseline = false;
  grid.repeats = 5;
  grid.seed = 9;
  const auto rows = bench_complexity(grid);
  const double ratio = bench_mean(rows, "degree", 1e6) / bench_mean(rows, "degree", 1e3);
  const double slope = loglog_slope(rows, "q");
  return verdict(ratio < 20.0 && slope >= 0.8 && slope <= 1.3,
                 "extraction time ratio deg 1e6 / 1e3 = " + fmt(ratio) + " (< 20), q slope " + fmt(slope) +
                     " (in [0.8, 1.3])");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("craft_accept_det_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  write_bundle(testing::repeat_stream(40, 120, 1500, 0.6, 11), root / "bundle");
  {
    std::ofstream cfg(root / "config.json");
    cfg << R"({"model": {"d": 16, "k": 6, "use_repeat": true}, "max_epochs": 3, "patience": 3,
              "batch_size": 64, "optimizer": {"lr": 0.001}})";
  }
  const std::string cli = CRAFT_CLI_PATH;
  for (const char* run : {"a", "b"}) {
    const std::string cmd = "\"" + cli + "\" train --config \"" + (root / "config.json").string() +
                            "\" --dataset \"" + (root / "bundle").string() + "\" --seed 5 --out \"" +
                            (root / run).string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {Status::kFail, "craft train exited non-zero"};
  }
  bool same = true;
  std::string differing;
  for (const char* file : {"metrics.jsonl", "checkpoint.ckpt", "report.json", "negatives.bin"}) {
    const std::string a = slurp(root / "a" / file), b = slurp(root / "b" / file);
    if (a.empty() || a != b) same = false, differing += std::string(" ") + file;
  }
  fs::remove_all(root);
  return verdict(same, same ? "metrics.jsonl, checkpoint.ckpt, report.json and negatives.bin bit-identical"
                            : "differing or empty:" + differing);
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"gradient exactness", gradient_exactness}},
      {2, {"attention invariants", attention_invariants}},
      {3, {"index oracle equivalence", index_oracle}},
      {4, {"loss values", loss_values}},
      {5, {"overfit sanity", overfit_sanity}},
      {6, {"repeat-encoding efficacy", repeat_efficacy}},
      {7, {"small real dataset", uci_mrr}},
      {8, {"baseline ordering", uci_ordering}},
      {9, {"complexity trends", complexity_trends}},
      {10, {"determinism", determinism}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    std::stringstream list(argv[i]);
    for (std::string item; std::getline(list, item, ',');) selected.insert(std::stoi(item));
  }
  if (selected.empty()) {
    for (const auto& [id, c] : criteria) selected.insert(id);
  }

  int failed = 0, passed = 0;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::cout << "[" << tag << "] criterion " << id << " (" << it->second.first << "): " << o.detail << std::endl;
    failed += o.status == Status::kFail;
    passed += o.status == Status::kPass;
  }
  if (failed > 0) return 1;
  return passed == 0 ? 77 : 0;
}

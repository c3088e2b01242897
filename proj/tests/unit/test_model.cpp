#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "craft/gradcheck.hpp"
#include "craft/model.hpp"
#include "test_util.hpp"

namespace craft {
namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const nn::Tensor<double>& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

Mat mul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t x = 0; x < b.size(); ++x)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][x] * b[x][j];
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Straight-line forward for one query, written directly from the model
/// forward pass with plain loops.
std::vector<double> oracle_scores(const CraftModel<double>& model, const QueryBatch& b, std::size_t q) {
  const auto& cfg = model.config();
  const std::size_t d = cfg.d, k = b.k, j = b.num_candidates, h = cfg.heads, dh = d / h;
  const auto P = [&](const char* n) { return to_mat(model.param(n).value); };
  const Mat E = P("embedding");

  Mat S(k, std::vector<double>(d, 0.0));
  std::vector<bool> masked(k);
  for (std::size_t r = 0; r < k; ++r) {
    masked[r] = b.neighbor_mask[q * k + r] != 0;
    if (masked[r]) continue;
    const auto node = static_cast<std::size_t>(b.neighbor_ids[q * k + r]);
    if (cfg.positional_mode == PositionalMode::kPosition) {
      const Mat pos = P("positional");
      for (std::size_t c = 0; c < d; ++c) S[r][c] = E[node][c] + pos[k - 1 - r][c];
    } else {
      const Mat w = P("time_enc.w"), bb = P("time_enc.b"), proj = P("time_enc.proj"), pb = P("time_enc.proj_b");
      const double g = std::log1p(static_cast<double>(b.times[q] - b.neighbor_times[q * k + r]));
      std::vector<double> cat(2 * d);
      for (std::size_t c = 0; c < d; ++c) cat[c] = E[node][c], cat[d + c] = g * w[0][c] + bb[0][c];
      for (std::size_t c = 0; c < d; ++c) {
        double s = pb[0][c];
        for (std::size_t x = 0; x < 2 * d; ++x) s += cat[x] * proj[x][c];
        S[r][c] = s;
      }
    }
  }

  Mat H(j);
  for (std::size_t c = 0; c < j; ++c) H[c] = E[b.candidates[q * j + c]];

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    const auto L = [&](const char* n) { return to_mat(model.param(pre + n).value); };
    const Mat Q = mul(H, L("wq")), K = mul(S, L("wk")), V = mul(S, L("wv"));
    Mat Z(j, std::vector<double>(d, 0.0));
    for (std::size_t hd = 0; hd < h; ++hd) {
      for (std::size_t c = 0; c < j; ++c) {
        std::vector<double> logit(k, -INFINITY);
        double mx = -INFINITY;
        for (std::size_t r = 0; r < k; ++r) {
          if (masked[r]) continue;
          double s = 0.0;
          for (std::size_t x = 0; x < dh; ++x) s += Q[c][hd * dh + x] * K[r][hd * dh + x];
          logit[r] = s / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, logit[r]);
        }
        double den = 0.0;
        for (std::size_t r = 0; r < k; ++r) den += masked[r] ? 0.0 : std::exp(logit[r] - mx);
        for (std::size_t r = 0; r < k; ++r) {
          if (masked[r]) continue;
          const double a = std::exp(logit[r] - mx) / den;
          for (std::size_t x = 0; x < dh; ++x) Z[c][hd * dh + x] += a * V[r][hd * dh + x];
        }
      }
    }
    Mat zres = mul(Z, L("wo"));
    for (std::size_t c = 0; c < j; ++c)
      for (std::size_t x = 0; x < d; ++x) zres[c][x] += H[c][x];
    Mat f1 = mul(zres, L("ffn_w1"));
    const Mat b1 = L("ffn_b1"), b2 = L("ffn_b2");
    for (auto& row : f1)
      for (std::size_t x = 0; x < row.size(); ++x) row[x] = gelu(row[x] + b1[0][x]);
    Mat f2 = mul(f1, L("ffn_w2"));
    for (std::size_t c = 0; c < j; ++c)
      for (std::size_t x = 0; x < d; ++x) H[c][x] = f2[c][x] + b2[0][x] + zres[c][x];
  }

  std::vector<double> out(j);
  for (std::size_t c = 0; c < j; ++c) {
    std::vector<double> feat = H[c];
    const std::size_t slot = q * j + c;
    if (cfg.use_elapsed) {
      const Mat w = P("time.w"), bb = P("time.b"), fresh = P("time.fresh");
      for (std::size_t x = 0; x < d; ++x) {
        feat.push_back(b.never_active[slot] ? fresh[0][x] : std::log1p(b.delta_t[slot]) * w[0][x] + bb[0][x]);
      }
    }
    if (cfg.use_repeat) {
      const Mat w = P("repeat.w"), bb = P("repeat.b");
      for (std::size_t x = 0; x < d; ++x) feat.push_back(std::log1p(b.repeat_counts[slot]) * w[0][x] + bb[0][x]);
    }
    const Mat hidden = mul(Mat{feat}, P("head.w1"));
    const Mat b1 = P("head.b1"), w2 = P("head.w2"), b2 = P("head.b2");
    double y = b2[0][0];
    for (std::size_t x = 0; x < d; ++x) y += gelu(hidden[0][x] + b1[0][x]) * w2[x][0];
    out[c] = y;
  }
  return out;
}

ModelConfig tiny_config(std::size_t n, std::size_t d, std::size_t h, std::size_t L, std::size_t k) {
  ModelConfig c;
  c.num_nodes = n;
  c.d = d;
  c.heads = h;
  c.layers = L;
  c.k = k;
  c.p_hidden = c.p_attn = c.p_emb = 0.0;
  return c;
}

struct Fixture {
  GraphMeta meta;
  std::vector<TemporalEdge> edges;
  NeighborIndex index;
  std::vector<RankingQuery> queries;
};

/// Random graph plus warm-source ranking queries over its last edges.
Fixture make_fixture(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t q, std::size_t count) {
  std::mt19937_64 g(seed);
  Fixture f{{n, false, 0}, {}, NeighborIndex{}, {}};
  f.edges = testing::random_edges(g, m, f.meta, static_cast<Timestamp>(m / 2));
  f.index = NeighborIndex::build(f.edges, f.meta);
  auto rng = make_rng(seed);
  for (auto it = f.edges.rbegin(); it != f.edges.rend() && f.queries.size() < count; ++it) {
    if (is_cold_source(f.index, it->src, it->t)) continue;
    f.queries.push_back({it->src, it->t, it->dst, sample_negatives(rng, f.index, it->src, it->t, it->dst, q), Phase::kTest});
  }
  return f;
}

void set_small_integers(CraftModel<double>& model) {
  std::size_t i = 0;
  for (auto* p : model.parameters()) {
    for (std::size_t r = 0; r < p->value.size(); ++r, ++i) {
      p->value[r] = static_cast<double>(static_cast<int>((i * 7 + 3) % 5) - 2) * 0.25;
    }
  }
  auto& e = model.param("embedding").value;
  for (std::size_t c = 0; c < e.cols(); ++c) e(e.rows() - 1, c) = 0.0;
}

TEST(Losses, BprValues) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const double x = n(rng);
    EXPECT_NEAR(bpr_loss(x, x), std::log(2.0), 1e-12);
    const double a = n(rng), b = n(rng);
    EXPECT_NEAR(bpr_loss(a, b), -std::log(1.0 / (1.0 + std::exp(-(a - b)))), 1e-12);
  }
  EXPECT_LT(bpr_loss(20.0, 0.0), 1e-8);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    double m1 = u(rng), m2 = u(rng);
    if (m1 == m2) continue;
    if (m1 > m2) std::swap(m1, m2);
    EXPECT_GT(bpr_loss(m1, 0.0), bpr_loss(m2, 0.0));
  }
}

TEST(Losses, BceValues) {
  EXPECT_NEAR(bce_loss(0.0, 0.0), 2.0 * std::log(2.0), 1e-15);
  EXPECT_LT(bce_loss(50.0, -50.0), 1e-20);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 3.0);
  const auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (int i = 0; i < 100; ++i) {
    const double a = n(rng), b = n(rng);
    EXPECT_NEAR(bce_loss(a, b), -std::log(sig(a)) - std::log(1.0 - sig(b)), 1e-12);
  }
}

TEST(Losses, TapeLossMatchesScalar) {
  nn::Tape<double> tape(false);
  const auto s = tape.constant(nn::Tensor<double>({2, 3}, {1.0, 0.5, 2.0, -1.0, -3.0, 0.0}));
  const double bpr = tape.value(ranking_loss(tape, s, LossKind::kBpr))[0];
  const double bce = tape.value(ranking_loss(tape, s, LossKind::kBce))[0];
  EXPECT_NEAR(bpr, (bpr_loss(1, 0.5) + bpr_loss(1, 2) + bpr_loss(-1, -3) + bpr_loss(-1, 0)) / 4, 1e-14);
  EXPECT_NEAR(bce, (bce_loss(1, 0.5) + bce_loss(1, 2) + bce_loss(-1, -3) + bce_loss(-1, 0)) / 4, 1e-14);
}

TEST(Config, Validation) {
  auto c = tiny_config(10, 6, 4, 1, 3);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_config(10, 8, 2, 0, 3);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_config(10, 8, 2, 1, 0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_config(10, 8, 2, 1, 3);
  c.p_attn = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Model, PaddingRowIsZeroAndFrozen) {
  CraftModel<double> model(tiny_config(5, 4, 2, 1, 3), 1);
  const auto& e = model.param("embedding");
  EXPECT_EQ(e.value.rows(), 6u);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(e.value(5, c), 0.0);
  EXPECT_EQ(e.frozen_rows, (std::vector<std::size_t>{5}));
}

TEST(SourceContext, PaddingAndIdentityCases) {
  CraftModel<double> model(tiny_config(5, 4, 2, 1, 3), 2);
  QueryBatch b;
  b.size = 1;
  b.k = 3;
  b.padding_id = 5;
  b.times = {10};
  b.neighbor_ids = {5, 5, 5};
  b.neighbor_mask = {1, 1, 1};
  b.neighbor_times = {0, 0, 0};
  {
    nn::Tape<double> tape(false);
    const auto& s = tape.value(model.encode_source_context(tape, b));
    for (double x : s.values()) EXPECT_EQ(x, 0.0);
  }
  model.param("positional").value.fill(0.0);
  b.neighbor_ids = {5, 5, 2};
  b.neighbor_mask = {1, 1, 0};
  nn::Tape<double> tape(false);
  const auto& s = tape.value(model.encode_source_context(tape, b));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(s(2, c), model.param("embedding").value(2, c));
}

TEST(SourceContext, MatchesPerRowAssembly) {
  auto f = make_fixture(3, 30, 600, 4, 5);
  CraftModel<double> model(tiny_config(30, 8, 2, 1, 6), 3);
  const auto b = assemble_batch(f.index, f.queries, 6, false);
  nn::Tape<double> tape(false);
  const auto& s = tape.value(model.encode_source_context(tape, b));
  const auto& E = model.param("embedding").value;
  const auto& P = model.param("positional").value;
  for (std::size_t r = 0; r < b.size * 6; ++r) {
    const auto id = static_cast<std::size_t>(b.neighbor_ids[r]);
    for (std::size_t c = 0; c < 8; ++c) {
      const double expected = b.neighbor_mask[r] ? 0.0 : E(id, c) + P(5 - r % 6, c);
      ASSERT_EQ(s(r, c), expected);
    }
  }
}

class AttentionCases : public ::testing::Test {
 protected:
  CraftModel<double> model{tiny_config(6, 4, 2, 1, 3), 4};
  std::mt19937_64 rng{4};

  nn::Tensor<double> random(std::size_t r, std::size_t c) {
    std::normal_distribution<double> n;
    nn::Tensor<double> t({r, c});
    for (auto& x : t.values()) x = n(rng);
    return t;
  }
  void attention_only() {
    model.param("layer0.wo").value.fill(0.0);
    for (std::size_t r = 0; r < 4; ++r) model.param("layer0.wo").value(r, r) = 1.0;
    model.param("layer0.ffn_w2").value.fill(0.0);
    model.param("layer0.ffn_b2").value.fill(0.0);
  }
};

TEST_F(AttentionCases, SingleNeighborReturnsItsValueRow) {
  attention_only();
  const auto D = random(2, 4), S = random(3, 4);
  const std::vector<std::uint8_t> mask{1, 0, 1};
  nn::Tape<double> tape(false);
  model.capture_attention = true;
  const auto& H = tape.value(model.cross_attention(tape, tape.constant(D), tape.constant(S), mask, 1, 2));
  for (double w : model.captured_attention()[0].values()) EXPECT_TRUE(w == 0.0 || w == 1.0);
  const auto& Wv = model.param("layer0.wv").value;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t x = 0; x < 4; ++x) {
      double v = 0.0;
      for (std::size_t y = 0; y < 4; ++y) v += S(1, y) * Wv(y, x);
      EXPECT_NEAR(H(c, x) - D(c, x), v, 1e-12);
    }
  }
}

TEST_F(AttentionCases, ZeroQueryGivesMeanOfUnmaskedValues) {
  attention_only();
  model.param("layer0.wq").value.fill(0.0);
  const auto D = random(2, 4), S = random(3, 4);
  const std::vector<std::uint8_t> mask{0, 1, 0};
  nn::Tape<double> tape(false);
  model.capture_attention = true;
  const auto& H = tape.value(model.cross_attention(tape, tape.constant(D), tape.constant(S), mask, 1, 2));
  const auto& att = model.captured_attention()[0];
  for (std::size_t r = 0; r < att.size() / 3; ++r) {
    EXPECT_DOUBLE_EQ(att[r * 3 + 0], 0.5);
    EXPECT_EQ(att[r * 3 + 1], 0.0);
    EXPECT_DOUBLE_EQ(att[r * 3 + 2], 0.5);
  }
  const auto& Wv = model.param("layer0.wv").value;
  for (std::size_t x = 0; x < 4; ++x) {
    double v = 0.0;
    for (std::size_t y = 0; y < 4; ++y) v += 0.5 * (S(0, y) + S(2, y)) * Wv(y, x);
    EXPECT_NEAR(H(0, x) - D(0, x), v, 1e-12);
  }
}

TEST_F(AttentionCases, ResidualIdentity) {
  model.param("layer0.wo").value.fill(0.0);
  model.param("layer0.ffn_w1").value.fill(0.0);
  model.param("layer0.ffn_w2").value.fill(0.0);
  model.param("layer0.ffn_b2").value.fill(0.0);
  const auto D = random(4, 4), S = random(6, 4);
  const std::vector<std::uint8_t> mask{0, 0, 1, 1, 0, 0};
  nn::Tape<double> tape(false);
  EXPECT_EQ(tape.value(model.cross_attention(tape, tape.constant(D), tape.constant(S), mask, 2, 2)), D);
}

TEST_F(AttentionCases, FullyMaskedContextIsRejected) {
  const auto D = random(2, 4), S = random(6, 4);
  const std::vector<std::uint8_t> mask{0, 0, 0, 1, 1, 1};
  nn::Tape<double> tape(false);
  EXPECT_THROW(model.cross_attention(tape, tape.constant(D), tape.constant(S), mask, 2, 1), ColdSourceError);
}

TEST(Attention, RowsSumToOneAndPaddingGetsNoMass) {
  auto f = make_fixture(5, 40, 400, 9, 20);
  for (bool single : {false, true}) {
    auto cfg = tiny_config(40, 16, 4, 2, 12);
    const auto b = assemble_batch(f.index, f.queries, 12, false);
    std::vector<nn::Tensor<double>> caps;
    if (single) {
      CraftModel<float> m(cfg, 5);
      m.capture_attention = true;
      m.score(b);
      for (const auto& t : m.captured_attention()) caps.push_back(t.cast<double>());
    } else {
      CraftModel<double> m(cfg, 5);
      m.capture_attention = true;
      m.score(b);
      caps = m.captured_attention();
    }
    ASSERT_EQ(caps.size(), 2u);
    const double tol = single ? 1e-6 : 1e-12;
    for (const auto& att : caps) {
      const std::size_t rows = att.size() / 12;
      const std::size_t per_group = rows / b.size;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t g = r / per_group;
        double sum = 0.0, pad_mass = 0.0;
        for (std::size_t c = 0; c < 12; ++c) {
          sum += att[r * 12 + c];
          if (b.neighbor_mask[g * 12 + c]) pad_mass += att[r * 12 + c];
        }
        ASSERT_NEAR(sum, 1.0, tol);
        ASSERT_LT(pad_mass, 1e-12);
      }
    }
  }
}

TEST(Score, MatchesStraightLineOracleSmallIntegers) {
  // d=4, h=2, L=1, j=2, k=3.
  auto f = make_fixture(6, 12, 120, 1, 6);
  CraftModel<double> model(tiny_config(12, 4, 2, 1, 3), 6);
  set_small_integers(model);
  const auto b = assemble_batch(f.index, f.queries, 3, false);
  const auto got = model.score(b);
  for (std::size_t q = 0; q < b.size; ++q) {
    const auto want = oracle_scores(model, b, q);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(got[q * 2 + c], want[c], 1e-12);
  }
}

TEST(Score, MatchesOracleAcrossVariants) {
  auto f = make_fixture(7, 25, 500, 5, 15);
  for (int variant = 0; variant < 4; ++variant) {
    auto cfg = tiny_config(25, 8, 2, 2, 5);
    cfg.use_repeat = variant & 1;
    cfg.use_elapsed = variant != 2;
    if (variant == 3) cfg.positional_mode = PositionalMode::kTimeInterval;
    CraftModel<double> model(cfg, 7);
    const auto b = assemble_batch(f.index, f.queries, 5, cfg.use_repeat);
    const auto got = model.score(b);
    for (std::size_t q = 0; q < b.size; ++q) {
      const auto want = oracle_scores(model, b, q);
      for (std::size_t c = 0; c < 6; ++c) ASSERT_NEAR(got[q * 6 + c], want[c], 1e-10) << variant;
    }
  }
}

TEST(Score, IdenticalCandidatesScoreIdentically) {
  auto f = make_fixture(8, 20, 300, 3, 3);
  auto cfg = tiny_config(20, 8, 2, 1, 4);
  cfg.use_repeat = true;
  CraftModel<double> model(cfg, 8);
  auto b = assemble_batch(f.index, f.queries, 4, true);
  b.candidates[1] = b.candidates[2];
  b.delta_t[1] = b.delta_t[2];
  b.never_active[1] = b.never_active[2];
  b.repeat_counts[1] = b.repeat_counts[2];
  const auto s = model.score(b);
  EXPECT_EQ(s[1], s[2]);
}

TEST(Score, ZeroElapsedUsesProjectionBias) {
  auto cfg = tiny_config(6, 4, 2, 1, 2);
  CraftModel<double> model(cfg, 9);
  model.param("time.w").value.fill(7.0);
  QueryBatch b;
  b.size = 1;
  b.k = 2;
  b.num_candidates = 2;
  b.padding_id = 6;
  b.sources = {0};
  b.times = {10};
  b.candidates = {3, 3};
  b.neighbor_ids = {6, 1};
  b.neighbor_mask = {1, 0};
  b.neighbor_times = {0, 9};
  b.history = {1};
  b.delta_t = {0.0, 0.0};
  b.never_active = {0, 0};
  const auto a = model.score(b);
  model.param("time.w").value.fill(-3.0);
  const auto c = model.score(b);
  EXPECT_EQ(a, c);
}

TEST(Score, NeverActiveUsesFreshVector) {
  auto cfg = tiny_config(6, 4, 2, 1, 2);
  CraftModel<double> model(cfg, 10);
  QueryBatch b;
  b.size = 1;
  b.k = 2;
  b.num_candidates = 2;
  b.padding_id = 6;
  b.sources = {0};
  b.times = {10};
  b.candidates = {3, 3};
  b.neighbor_ids = {6, 1};
  b.neighbor_mask = {1, 0};
  b.neighbor_times = {0, 9};
  b.history = {1};
  b.delta_t = {123.0, 0.0};
  b.never_active = {1, 1};
  const auto s = model.score(b);
  EXPECT_EQ(s[0], s[1]);
}

TEST(Score, ColdSourceRejected) {
  auto f = make_fixture(11, 20, 200, 3, 1);
  CraftModel<double> model(tiny_config(20, 8, 2, 1, 4), 11);
  std::vector<RankingQuery> q{f.queries[0]};
  q[0].t = 0;
  const auto b = assemble_batch(f.index, q, 4, false);
  EXPECT_THROW(model.score(b), ColdSourceError);
}

TEST(Score, CandidatePermutationPermutesScores) {
  auto f = make_fixture(12, 40, 800, 9, 10);
  auto cfg = tiny_config(40, 8, 2, 2, 6);
  cfg.use_repeat = true;
  CraftModel<double> model(cfg, 12);
  const auto base = model.score(assemble_batch(f.index, f.queries, 6, true));
  auto permuted = f.queries;
  std::mt19937_64 rng(12);
  std::vector<std::vector<std::size_t>> perms;
  for (auto& q : permuted) {
    std::vector<NodeId> all{q.d_pos};
    all.insert(all.end(), q.negatives.begin(), q.negatives.end());
    std::vector<std::size_t> perm(all.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    q.d_pos = all[perm[0]];
    for (std::size_t i = 1; i < perm.size(); ++i) q.negatives[i - 1] = all[perm[i]];
    perms.push_back(perm);
  }
  const auto got = model.score(assemble_batch(f.index, permuted, 6, true));
  for (std::size_t q = 0; q < perms.size(); ++q)
    for (std::size_t c = 0; c < 10; ++c) ASSERT_EQ(got[q * 10 + c], base[q * 10 + perms[q][c]]);
}

TEST(Score, BatchCompositionInvariance) {
  auto f = make_fixture(13, 60, 1500, 20, 40);
  CraftModel<float> model(tiny_config(60, 16, 2, 1, 10), 13);
  const auto all = model.score(assemble_batch(f.index, f.queries, 10, false));
  for (std::size_t q = 0; q < f.queries.size(); ++q) {
    const auto one = model.score(assemble_batch(f.index, std::span(&f.queries[q], 1), 10, false));
    for (std::size_t c = 0; c < 21; ++c) ASSERT_NEAR(one[c], all[q * 21 + c], 1e-6);
  }
}

TEST(TimeEncoding, ZeroGapGivesBias) {
  auto cfg = tiny_config(6, 4, 2, 1, 2);
  cfg.positional_mode = PositionalMode::kTimeInterval;
  CraftModel<double> model(cfg, 14);
  EXPECT_FALSE(model.has_param("positional"));
  QueryBatch b;
  b.size = 1;
  b.k = 2;
  b.padding_id = 6;
  b.times = {10};
  b.neighbor_ids = {2, 1};
  b.neighbor_mask = {0, 0};
  b.neighbor_times = {10, 10};
  nn::Tape<double> t1(false);
  const auto before = t1.value(model.encode_source_context(t1, b));
  model.param("time_enc.w").value.fill(5.0);
  nn::Tape<double> t2(false);
  EXPECT_EQ(t2.value(model.encode_source_context(t2, b)), before);
  CraftModel<double> positional(tiny_config(6, 4, 2, 1, 2), 14);
  EXPECT_FALSE(positional.has_param("time_enc.w"));
}

TEST(GradientCheck, FullPipeline) {
  // d=8, h=2, L=2, k=4, j=3 with repeat context and a never-active candidate.
  auto f = make_fixture(15, 30, 300, 2, 4);
  auto cfg = tiny_config(31, 8, 2, 2, 4);
  cfg.use_repeat = true;
  cfg.ffn_width = 12;
  CraftModel<double> model(cfg, 15);
  auto queries = f.queries;
  queries[0].negatives[1] = 30;  // node 30 never appears in the stream
  const auto index = NeighborIndex::build(f.edges, {31, false, 0});
  const auto b = assemble_batch(index, queries, 4, true);
  ASSERT_EQ(b.never_active[2], 1);
  auto params = model.parameters();
  const auto r = nn::grad_check(
      [&](nn::Tape<double>& tape) { return ranking_loss(tape, model.forward(tape, b), LossKind::kBpr); },
      params, {1e-4, 200, 0});
  EXPECT_LT(r.max_rel_error, 1e-4);

  auto cfg2 = tiny_config(31, 8, 2, 1, 4);
  cfg2.positional_mode = PositionalMode::kTimeInterval;
  CraftModel<double> m2(cfg2, 16);
  auto p2 = m2.parameters();
  const auto b2 = assemble_batch(index, queries, 4, false);
  const auto r2 = nn::grad_check(
      [&](nn::Tape<double>& tape) { return ranking_loss(tape, m2.forward(tape, b2), LossKind::kBce); }, p2, {1e-4, 200, 0});
  EXPECT_LT(r2.max_rel_error, 1e-4);
}

std::vector<TrainingPair> warm_pairs(const Fixture& f, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::vector<TemporalEdge> warm;
  for (const auto& e : f.edges)
    if (!is_cold_source(f.index, e.src, e.t)) warm.push_back(e);
  return make_training_pairs(rng, warm, f.index);
}

TEST(Training, RepeatedBatchLossDecreases) {
  auto f = make_fixture(17, 50, 1000, 1, 0);
  auto pairs = warm_pairs(f, 17);
  pairs.resize(100);
  CraftModel<double> model(tiny_config(50, 16, 2, 1, 8), 17);
  AdamState opt{{1e-3, 0.9, 0.999, 1e-8}, 0};
  const auto b = assemble_batch(f.index, pairs, 8, false);
  auto rng = make_rng(0);
  std::vector<double> losses;
  for (int i = 0; i < 51; ++i) losses.push_back(train_step(model, opt, b, LossKind::kBpr, rng));
  int decreasing = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) decreasing += losses[i] <= losses[i - 1];
  EXPECT_GE(decreasing, 45);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Training, ZeroLearningRateLeavesParameters) {
  auto f = make_fixture(18, 40, 600, 1, 0);
  auto cfg = tiny_config(40, 8, 2, 1, 5);
  cfg.p_attn = cfg.p_hidden = cfg.p_emb = 0.2;
  CraftModel<float> model(cfg, 18);
  std::vector<nn::Tensor<float>> before;
  for (auto* p : model.parameters()) before.push_back(p->value);
  AdamState opt{{0.0, 0.9, 0.999, 1e-8}, 0};
  const auto stats = train_epoch(model, opt, warm_pairs(f, 18), f.index, {64, LossKind::kBpr, 18}, 1);
  EXPECT_GT(stats.batches, 1u);
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(params[i]->value, before[i]) << params[i]->name;
}

TEST(Training, SameSeedSameLosses) {
  auto f = make_fixture(19, 40, 800, 1, 0);
  auto run = [&] {
    auto cfg = tiny_config(40, 8, 2, 1, 5);
    cfg.p_attn = cfg.p_hidden = cfg.p_emb = 0.1;
    CraftModel<float> model(cfg, 19);
    AdamState opt{{1e-3, 0.9, 0.999, 1e-8}, 0};
    std::vector<double> out;
    for (std::size_t e = 1; e <= 2; ++e) {
      auto rng = make_rng(19, {static_cast<std::uint64_t>(Stream::kTrainNegatives), e});
      std::vector<TemporalEdge> warm;
      out.push_back(train_epoch(model, opt, make_training_pairs(rng, f.edges, f.index), f.index,
                                {50, LossKind::kBpr, 19}, e).mean_loss);
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Training, ColdPairsAreSkippedAndCounted) {
  auto f = make_fixture(20, 40, 400, 1, 0);
  auto rng = make_rng(20);
  const auto pairs = make_training_pairs(rng, f.edges, f.index);
  std::size_t cold = 0;
  for (const auto& p : pairs) cold += is_cold_source(f.index, p.s, p.t);
  ASSERT_GT(cold, 0u);
  CraftModel<float> model(tiny_config(40, 8, 2, 1, 5), 20);
  AdamState opt;
  const auto stats = train_epoch(model, opt, pairs, f.index, {100, LossKind::kBpr, 20}, 1);
  EXPECT_EQ(stats.skipped_cold, cold);
  EXPECT_EQ(stats.pairs, pairs.size() - cold);
}

}  // namespace
}  // namespace craft

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tmepsr/errors.hpp"
#include "tmepsr/time_encoder.hpp"

using namespace tmepsr;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

EmbeddingTables random_tables(std::size_t v, std::size_t e, std::size_t d, std::mt19937_64& rng) {
  return {Tensor::parameter({v, d}, oracle::random_vector(v * d, rng)),
          Tensor::parameter({e, d}, oracle::random_vector(e * d, rng))};
}

GruCellParams zero_gru(std::size_t d) {
  auto z = [](std::size_t r, std::size_t c) { return Tensor::parameter({r, c}, std::vector<double>(r * c, 0.0)); };
  return {z(1, d), z(1, d), z(1, d), z(d, d), z(d, d), z(d, d), z(1, d), z(1, d), z(1, d)};
}

GruCellParams random_gru(std::size_t d, std::mt19937_64& rng) {
  auto r = [&](std::size_t a, std::size_t b) { return Tensor::parameter({a, b}, oracle::random_vector(a * b, rng, 0.5)); };
  return {r(1, d), r(1, d), r(1, d), r(d, d), r(d, d), r(d, d), r(1, d), r(1, d), r(1, d)};
}

std::vector<double> gru_oracle(const GruCellParams& p, const std::vector<double>& x) {
  const std::size_t d = p.hidden();
  std::vector<double> h(d, 0.0), out;
  for (double xt : x) {
    h = oracle::gru_step(h, xt, values(p.w_z), values(p.w_r), values(p.w_h), values(p.u_z), values(p.u_r),
                         values(p.u_h), values(p.b_z), values(p.b_r), values(p.b_h));
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

}  // namespace

TEST(BaseEmbeddings, AlphaOneSelectsItemRows) {
  std::mt19937_64 rng(1);
  const auto t = random_tables(6, 5, 4, rng);
  const std::vector<std::size_t> items{3, 0, 5}, expls{1, 4, 2};
  const auto [rec, exp] = base_embeddings(items, expls, t, 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(rec.at(i, c), t.items.at(items[i], c));
      EXPECT_EQ(exp.at(i, c), t.expls.at(expls[i], c));
    }
}

TEST(BaseEmbeddings, HalfMixIsSymmetric) {
  std::mt19937_64 rng(2);
  const auto t = random_tables(6, 5, 4, rng);
  const std::vector<std::size_t> items{1, 2}, expls{0, 3};
  const auto [rec, exp] = base_embeddings(items, expls, t, 0.5);
  EXPECT_EQ(values(rec), values(exp));
}

TEST(BaseEmbeddings, DefaultAlphaMatchesHandMixture) {
  std::mt19937_64 rng(3);
  const auto t = random_tables(7, 6, 5, rng);
  const std::vector<std::size_t> items{6, 2, 2, 0}, expls{5, 5, 1, 3};
  const double a = 0.9;
  const auto [rec, exp] = base_embeddings(items, expls, t, a);
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_NEAR(rec.at(i, c), a * t.items.at(items[i], c) + (1 - a) * t.expls.at(expls[i], c), 1e-15);
      EXPECT_NEAR(exp.at(i, c), a * t.expls.at(expls[i], c) + (1 - a) * t.items.at(items[i], c), 1e-15);
    }
}

TEST(BaseEmbeddings, Errors) {
  std::mt19937_64 rng(4);
  const auto t = random_tables(3, 3, 2, rng);
  const std::vector<std::size_t> ok{0}, bad{3};
  EXPECT_THROW(base_embeddings(bad, ok, t, 0.9), DimensionError);
  EXPECT_THROW(base_embeddings(ok, bad, t, 0.9), DimensionError);
  EXPECT_THROW(base_embeddings(ok, ok, t, 1.5), ConfigError);
}

TEST(Intervals, ConstantTimesGiveZeros) {
  const std::vector<std::int64_t> t{100, 100, 100};
  const auto iv = intervals(t);
  EXPECT_EQ(iv.adj, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(iv.abs, (std::vector<double>{0, 0, 0}));
}

TEST(Intervals, TwoSteps) {
  const std::vector<std::int64_t> t{0, 100};
  const auto iv = intervals(t);
  EXPECT_EQ(iv.adj[0], 0.0);
  EXPECT_NEAR(iv.adj[1], std::log(101.0), 1e-15);
  EXPECT_NEAR(iv.adj[1], 4.61512, 1e-5);
  EXPECT_EQ(iv.abs, iv.adj);
}

TEST(Intervals, ThreeSteps) {
  const std::vector<std::int64_t> t{0, 10, 30};
  const auto iv = intervals(t);
  EXPECT_NEAR(iv.abs[1], std::log(11.0), 1e-15);
  EXPECT_NEAR(iv.abs[2], std::log(31.0), 1e-15);
  EXPECT_NEAR(iv.adj[1], std::log(11.0), 1e-15);
  EXPECT_NEAR(iv.adj[2], std::log(21.0), 1e-15);
}

TEST(Intervals, DecreasingThrows) {
  const std::vector<std::int64_t> t{5, 3};
  EXPECT_THROW(intervals(t), DataError);
}

TEST(Intervals, ShiftInvariantAndMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> gap(0, 100000);
  std::vector<std::int64_t> t{0};
  for (int i = 0; i < 30; ++i) t.push_back(t.back() + gap(rng));
  auto shifted = t;
  for (auto& x : shifted) x += 1'600'000'000;
  const auto a = intervals(t), b = intervals(shifted);
  EXPECT_EQ(a.adj, b.adj);
  EXPECT_EQ(a.abs, b.abs);
  EXPECT_TRUE(std::is_sorted(a.abs.begin(), a.abs.end()));
  for (double x : a.adj) EXPECT_GE(x, 0.0);
}

TEST(Gru, ZeroParametersStayAtZero) {
  const auto h = gru_encode(zero_gru(3), Tensor::constant({4, 1}, {1, -2, 3, 0.5}));
  EXPECT_EQ(h.shape(), (Shape{4, 3}));
  for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gru, SingleStepClosedForm) {
  std::mt19937_64 rng(6);
  const auto p = random_gru(2, rng);
  const double x = 0.7;
  const auto h = gru_encode(p, Tensor::constant({1, 1}, {x}));
  // From h0 = 0: z = σ(x w_z + b_z), h̃ = tanh(x w_h + b_h), h = (1 − z) h̃.
  for (std::size_t j = 0; j < 2; ++j) {
    const double z = oracle::sigmoid(x * p.w_z.data()[j] + p.b_z.data()[j]);
    const double c = std::tanh(x * p.w_h.data()[j] + p.b_h.data()[j]);
    EXPECT_NEAR(h.data()[j], (1 - z) * c, 1e-15);
  }
}

TEST(Gru, MatchesLoopOracle) {
  std::mt19937_64 rng(7);
  const auto p = random_gru(5, rng);
  const std::vector<double> x{0.0, 1.2, 3.4, 0.1, 7.9, 2.2};
  const auto h = gru_encode(p, Tensor::constant({6, 1}, x));
  const auto want = gru_oracle(p, x);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(h.data()[i], want[i], 1e-12);
}

TEST(Gru, GradientCheck) {
  std::mt19937_64 rng(8);
  const auto p = random_gru(3, rng);
  const Tensor x = Tensor::constant({5, 1}, {0.0, 0.5, 2.0, 1.0, 3.0});
  const auto r = grad_check([&] { return ops::sum(ops::tanh(gru_encode(p, x))); }, p.tensors());
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(Gate, ZeroWeightsGiveHalf) {
  std::mt19937_64 rng(9);
  MlpParams m = init_mlp(4, 4, rng);
  for (Tensor t : m.tensors())
    for (double& v : t.mutable_data()) v = 0.0;
  EXPECT_EQ(gate(m, Tensor::constant({3, 4}, oracle::random_vector(12, rng))).item(), 0.5);
}

TEST(Gate, LargeBiasSaturates) {
  std::mt19937_64 rng(10);
  MlpParams m = init_mlp(4, 4, rng);
  for (Tensor t : {m.w2})
    for (double& v : t.mutable_data()) v = 0.0;
  m.b2.mutable_data()[0] = 10.0;
  EXPECT_GT(gate(m, Tensor::constant({2, 4}, oracle::random_vector(8, rng))).item(), 0.9999);
}

TEST(Gate, MatchesComposedFormula) {
  std::mt19937_64 rng(11);
  const MlpParams m = init_mlp(3, 3, rng);
  const auto base = oracle::random_vector(12, rng);
  const double got = gate(m, Tensor::constant({4, 3}, base)).item();
  std::vector<double> mean(3, 0.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) mean[c] += base[r * 3 + c] / 4.0;
  double out = m.b2.data()[0];
  for (std::size_t j = 0; j < 3; ++j) {
    double hidden = m.b1.data()[j];
    for (std::size_t c = 0; c < 3; ++c) hidden += mean[c] * m.w1.at(c, j);
    out += std::tanh(hidden) * m.w2.data()[j];
  }
  EXPECT_NEAR(got, oracle::sigmoid(out), 1e-14);
}

TEST(Gate, StrictlyInsideUnitInterval) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    std::mt19937_64 rng(s);
    const MlpParams m = init_mlp(4, 4, rng);
    const double g = gate(m, Tensor::constant({3, 4}, oracle::random_vector(12, rng, 3.0))).item();
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
  }
}

TEST(Fuse, Endpoints) {
  std::mt19937_64 rng(12);
  const Tensor a = Tensor::constant({3, 2}, oracle::random_vector(6, rng));
  const Tensor b = Tensor::constant({3, 2}, oracle::random_vector(6, rng));
  EXPECT_EQ(values(fuse(a, b, Tensor::scalar(1.0))), values(a));
  EXPECT_EQ(values(fuse(a, b, Tensor::scalar(0.0))), values(b));
  const auto half = fuse(a, b, Tensor::scalar(0.5));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(half.data()[i], (a.data()[i] + b.data()[i]) / 2, 1e-15);
}

class TimeAware : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(13);
    tables = random_tables(8, 6, 4, rng);
    params = init_time_encoder(4, rng);
  }
  TimeEncodeInput input() const { return {items, expls, times}; }

  EmbeddingTables tables;
  TimeEncoderParams params;
  std::vector<std::size_t> items{1, 7, 3, 3, 0}, expls{5, 2, 2, 0, 1};
  std::vector<std::int64_t> times{100, 160, 4000, 4000, 90000};
};

TEST_F(TimeAware, BetaZeroReturnsBase) {
  const auto out = time_aware_embed(input(), tables, params, 0.9, 0.0, TimeStrategy::gated);
  EXPECT_EQ(values(out.e_rec_time), values(out.e_rec));
  EXPECT_EQ(values(out.e_exp_time), values(out.e_exp));
  const auto off = time_aware_embed(input(), tables, params, 0.9, 0.1, TimeStrategy::disabled);
  EXPECT_EQ(values(off.e_rec_time), values(out.e_rec));
  EXPECT_FALSE(off.gamma_rec.defined());
}

TEST_F(TimeAware, UnitFeaturesShiftByBeta) {
  // Saturate both GRUs so every hidden state is 1: z → 0 and h̃ → 1.
  for (GruCellParams* g : {&params.gru_adj, &params.gru_abs}) {
    for (Tensor t : g->tensors())
      for (double& v : t.mutable_data()) v = 0.0;
    for (double& v : g->b_z.mutable_data()) v = -60.0;
    for (double& v : g->b_h.mutable_data()) v = 60.0;
  }
  const auto out = time_aware_embed(input(), tables, params, 0.9, 0.1, TimeStrategy::gated);
  for (std::size_t i = 0; i < out.e_rec.size(); ++i) {
    EXPECT_NEAR(out.e_rec_time.data()[i] - out.e_rec.data()[i], 0.1, 1e-12);
    EXPECT_NEAR(out.e_exp_time.data()[i] - out.e_exp.data()[i], 0.1, 1e-12);
  }
}

TEST_F(TimeAware, AffineInBeta) {
  auto at = [&](double b) { return values(time_aware_embed(input(), tables, params, 0.9, b, TimeStrategy::gated).e_rec_time); };
  const auto a0 = at(0.0), a1 = at(0.1), a2 = at(0.2);
  for (std::size_t i = 0; i < a0.size(); ++i) EXPECT_NEAR(a2[i] - a1[i], a1[i] - a0[i], 1e-12);
}

TEST_F(TimeAware, StrategiesAreFormulaSubstitutions) {
  const std::size_t n = times.size();
  const auto iv = intervals(times);
  const auto h_adj = values(gru_encode(params.gru_adj, Tensor::constant({n, 1}, iv.adj)));
  const auto h_abs = values(gru_encode(params.gru_abs, Tensor::constant({n, 1}, iv.abs)));
  const auto gated = time_aware_embed(input(), tables, params, 0.9, 0.1, TimeStrategy::gated);
  const double g = gated.gamma_rec.item();
  EXPECT_GT(g, 0.0);
  EXPECT_LT(g, 1.0);
  const std::vector<std::pair<TimeStrategy, double>> cases{
      {TimeStrategy::abs_only, 0.0}, {TimeStrategy::adj_only, 1.0}, {TimeStrategy::equal, 0.5}, {TimeStrategy::gated, g}};
  for (const auto& [strategy, gamma] : cases) {
    const auto out = time_aware_embed(input(), tables, params, 0.9, 0.1, strategy);
    for (std::size_t i = 0; i < h_adj.size(); ++i) {
      const double want = out.e_rec.data()[i] + 0.1 * (gamma * h_adj[i] + (1 - gamma) * h_abs[i]);
      EXPECT_NEAR(out.e_rec_time.data()[i], want, 1e-14) << to_string(strategy);
    }
  }
}

TEST_F(TimeAware, StrategyNames) {
  for (auto s : {TimeStrategy::gated, TimeStrategy::abs_only, TimeStrategy::adj_only, TimeStrategy::equal,
                 TimeStrategy::disabled})
    EXPECT_EQ(parse_time_strategy(to_string(s)), s);
  EXPECT_THROW(parse_time_strategy("sometimes"), ConfigError);
}

TEST_F(TimeAware, GradientThroughWholeEncoder) {
  std::vector<Tensor> ps{tables.items, tables.expls};
  for (const auto* g : {&params.gru_adj, &params.gru_abs})
    for (const auto& t : g->tensors()) ps.push_back(t);
  for (const auto* m : {&params.gate_rec, &params.gate_exp})
    for (const auto& t : m->tensors()) ps.push_back(t);
  auto loss = [&] {
    const auto out = time_aware_embed(input(), tables, params, 0.9, 0.5, TimeStrategy::gated);
    return ops::add(ops::sum(ops::tanh(out.e_rec_time)), ops::sum(ops::mul(out.e_exp_time, out.e_exp_time)));
  };
  // Some reset-gate gradients are ~1e-5, so difference roundoff dominates their relative error.
  EXPECT_LT(grad_check(loss, ps).max_relative_error, 1e-5);
}

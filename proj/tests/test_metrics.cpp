#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "tmepsr/errors.hpp"
#include "tmepsr/metrics.hpp"

using namespace tmepsr;

TEST(Recall, Examples) {
  const std::vector<std::size_t> top{5, 2, 9, 1};
  EXPECT_EQ(recall_at_k(top, std::vector<std::size_t>{5}, 4), 1.0);
  EXPECT_EQ(recall_at_k(top, std::vector<std::size_t>{7}, 4), 0.0);
  EXPECT_NEAR(recall_at_k(top, std::vector<std::size_t>{2, 1, 8}, 4), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(recall_at_k(top, std::vector<std::size_t>{}, 4), DimensionError);
}

TEST(Ndcg, Examples) {
  const std::vector<std::size_t> top{5, 2, 9, 1, 0};
  EXPECT_EQ(ndcg_at_k(top, std::vector<std::size_t>{5}, 5), 1.0);
  EXPECT_NEAR(ndcg_at_k(top, std::vector<std::size_t>{1}, 5), 1.0 / std::log2(5.0), 1e-15);
  EXPECT_NEAR(1.0 / std::log2(5.0), 0.43068, 1e-5);
  EXPECT_EQ(ndcg_at_k(top, std::vector<std::size_t>{7}, 5), 0.0);
  EXPECT_THROW(ndcg_at_k(top, std::vector<std::size_t>{}, 5), DimensionError);
}

TEST(Metrics, MatchSetOracleOnRandomRankings) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t vocab = 5 + rng() % 60, k = 1 + rng() % std::min<std::size_t>(vocab, 20);
    std::vector<std::size_t> perm(vocab);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::set<std::size_t> truth;
    const std::size_t g = 1 + rng() % 4;
    while (truth.size() < g) truth.insert(rng() % vocab);
    const std::vector<std::size_t> tv(truth.begin(), truth.end()), topk(perm.begin(), perm.begin() + k);
    EXPECT_NEAR(recall_at_k(topk, tv, k), oracle::recall(perm, truth, k), 1e-12);
    EXPECT_NEAR(ndcg_at_k(topk, tv, k), oracle::ndcg(perm, truth, k), 1e-12);
    if (g == 1) EXPECT_LE(ndcg_at_k(topk, tv, k), recall_at_k(topk, tv, k));
  }
}

TEST(TopK, OrderingAndTies) {
  const std::vector<double> s{0.1, 0.5, 0.5, 0.9, 0.5};
  EXPECT_EQ(top_k(s, 3), (std::vector<std::size_t>{3, 1, 2}));
  const std::vector<double> flat(8, 0.0);
  EXPECT_EQ(top_k(flat, 4), (std::vector<std::size_t>{0, 1, 2, 3}));
  const auto all = top_k(s, 5);
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), 5u);
  EXPECT_THROW(top_k(s, 6), DimensionError);
  std::vector<double> unique(10, 0.0);
  unique[3] = 1.0;
  EXPECT_EQ(top_k(unique, 1).front(), 3u);
}

TEST(EvaluateScores, OracleAndAdversarialScorers) {
  std::mt19937_64 rng(2);
  std::vector<std::vector<double>> good, bad;
  std::vector<std::size_t> truth;
  for (int u = 0; u < 50; ++u) {
    const std::size_t t = rng() % 40;
    truth.push_back(t);
    std::vector<double> g(40, 0.0), b(40, 0.0);
    g[t] = 1.0;
    b[t] = -1e9;
    good.push_back(g);
    bad.push_back(b);
  }
  const auto r1 = evaluate_scores(Task::rec, good, truth, 10);
  EXPECT_EQ(r1.recall, 1.0);
  EXPECT_EQ(r1.ndcg, 1.0);
  EXPECT_EQ(r1.user_count, 50u);
  const auto r0 = evaluate_scores(Task::exp, bad, truth, 10);
  EXPECT_EQ(r0.recall, 0.0);
  EXPECT_EQ(r0.ndcg, 0.0);
  EXPECT_EQ(evaluate_scores(Task::rec, bad, truth, 40).recall, 1.0);
  EXPECT_THROW(evaluate_scores(Task::rec, std::vector<std::vector<double>>{}, std::vector<std::size_t>{}, 10),
               DimensionError);
}

TEST(EvaluateScores, RandomScorerRecallNearKOverV) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t users = 5000;
  std::vector<std::vector<double>> scores(users, std::vector<double>(100));
  std::vector<std::size_t> truth(users);
  for (std::size_t u = 0; u < users; ++u) {
    for (double& s : scores[u]) s = n(rng);
    truth[u] = rng() % 100;
  }
  const double r = evaluate_scores(Task::rec, scores, truth, 10).recall;
  const double sigma = std::sqrt(0.1 * 0.9 / users);
  EXPECT_LT(std::abs(r - 0.1), 3 * sigma);
}

TEST(Metrics, InvariantToPermutationOutsideTopK) {
  std::vector<double> s{0.9, 0.1, 0.8, 0.2, 0.7, 0.3};
  const std::vector<std::size_t> truth{4};
  const double before = ndcg_at_k(top_k(s, 3), truth, 3);
  std::swap(s[1], s[3]);
  EXPECT_EQ(ndcg_at_k(top_k(s, 3), truth, 3), before);
}

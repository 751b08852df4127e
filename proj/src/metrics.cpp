#include "tmepsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "tmepsr/errors.hpp"

namespace tmepsr {

namespace {

void check_inputs(std::span<const std::size_t> topk, std::span<const std::size_t> truth, std::size_t k) {
  if (truth.empty()) throw DimensionError("metric: empty truth set");
  if (k == 0) throw DimensionError("metric: K must be positive");
  if (topk.size() < k) throw DimensionError("metric: ranked list shorter than K");
}

}  // namespace

std::string to_string(Task task) { return task == Task::rec ? "rec" : "exp"; }

double recall_at_k(std::span<const std::size_t> topk, std::span<const std::size_t> truth, std::size_t k) {
  check_inputs(topk, truth, k);
  const std::unordered_set<std::size_t> relevant(truth.begin(), truth.end());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += relevant.contains(topk[i]);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const std::size_t> topk, std::span<const std::size_t> truth, std::size_t k) {
  check_inputs(topk, truth, k);
  const std::unordered_set<std::size_t> relevant(truth.begin(), truth.end());
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (relevant.contains(topk[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  const std::size_t ideal = std::min(k, relevant.size());
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  if (k == 0) throw DimensionError("top_k: K must be positive");
  if (k > scores.size()) {
    throw DimensionError("top_k: K=" + std::to_string(k) + " exceeds vocabulary size " + std::to_string(scores.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

EvalResult evaluate_scores(Task task, std::span<const std::vector<double>> scores, std::span<const std::size_t> truth,
                           std::size_t k) {
  if (scores.empty()) throw DimensionError("evaluate: no users");
  if (scores.size() != truth.size()) throw DimensionError("evaluate: score and truth counts differ");
  // Checked up front: nothing inside the parallel loop may throw.
  for (std::size_t u = 0; u < scores.size(); ++u) {
    if (k == 0 || k > scores[u].size()) {
      throw DimensionError("evaluate: K=" + std::to_string(k) + " exceeds vocabulary size " +
                           std::to_string(scores[u].size()));
    }
    if (truth[u] >= scores[u].size()) throw DimensionError("evaluate: truth index out of range");
  }
  EvalResult r;
  r.task = task;
  r.k = k;
  r.user_count = scores.size();
  std::vector<double> recall(scores.size()), ndcg(scores.size());
#pragma omp parallel for schedule(static)
  for (std::size_t u = 0; u < scores.size(); ++u) {
    const auto ranked = top_k(scores[u], k);
    const std::size_t t[1] = {truth[u]};
    recall[u] = recall_at_k(ranked, t, k);
    ndcg[u] = ndcg_at_k(ranked, t, k);
  }
  // Fixed-order reduction keeps averages bit-stable across thread counts.
  for (std::size_t u = 0; u < scores.size(); ++u) {
    r.recall += recall[u];
    r.ndcg += ndcg[u];
  }
  r.recall /= static_cast<double>(scores.size());
  r.ndcg /= static_cast<double>(scores.size());
  return r;
}

std::vector<std::size_t> predict_topk(const ModelParams& params, const ExperimentConfig& config,
                                      const InteractionSequence& prefix, std::size_t k, Task task) {
  const std::size_t vocab = task == Task::rec ? params.item_count() : params.expl_count();
  if (k == 0 || k > vocab) throw DimensionError("predict_topk: K must lie in [1, " + std::to_string(vocab) + "]");
  const LastScores s = score_last(params, config, truncate_recent(prefix, config.max_len));
  return top_k(task == Task::rec ? s.rec : s.exp, k);
}

std::pair<EvalResult, EvalResult> evaluate(const ModelParams& params, const ExperimentConfig& config,
                                           std::span<const SplitSequence> splits, EvalTarget target, std::size_t k) {
  if (splits.empty()) throw DimensionError("evaluate: no users");
  std::vector<std::vector<double>> rec(splits.size()), exp(splits.size());
  std::vector<std::size_t> rec_truth(splits.size()), exp_truth(splits.size());
  auto score_user = [&](std::size_t u) {
    const SplitSequence& s = splits[u];
    const InteractionSequence input =
        truncate_recent(target == EvalTarget::validation ? s.train : s.train_and_valid(), config.max_len);
    LastScores scores = score_last(params, config, input);
    if (config.mask_seen) {
      for (std::size_t item : input.items) scores.rec[item] = -std::numeric_limits<double>::infinity();
    }
    rec[u] = std::move(scores.rec);
    exp[u] = std::move(scores.exp);
    rec_truth[u] = target == EvalTarget::validation ? s.valid_item : s.test_item;
    exp_truth[u] = target == EvalTarget::validation ? s.valid_expl : s.test_expl;
  };
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t u = 0; u < splits.size(); ++u) {
    try {
      score_user(u);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return {evaluate_scores(Task::rec, rec, rec_truth, k), evaluate_scores(Task::exp, exp, exp_truth, k)};
}

}  // namespace tmepsr

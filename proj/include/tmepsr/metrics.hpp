#pragma once

// Recall@K and NDCG@K with binary relevance, macro-averaged over users.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmepsr/config.hpp"
#include "tmepsr/dataset.hpp"
#include "tmepsr/model.hpp"

namespace tmepsr {

enum class Task { rec, exp };
std::string to_string(Task task);

struct EvalResult {
  Task task = Task::rec;
  std::size_t k = 10;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t user_count = 0;
};

// |topk[:K] ∩ truth| / |truth|.
double recall_at_k(std::span<const std::size_t> topk, std::span<const std::size_t> truth, std::size_t k);
// DCG over the first K ranks (rank i discounted by log2(i+1)) over the ideal DCG
// of min(K, |truth|) hits.
double ndcg_at_k(std::span<const std::size_t> topk, std::span<const std::size_t> truth, std::size_t k);

// Indices of the K largest scores, descending; equal scores rank the smaller index first.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

// Macro average over cases of per-case metrics, one relevant index per case.
EvalResult evaluate_scores(Task task, std::span<const std::vector<double>> scores, std::span<const std::size_t> truth,
                           std::size_t k);

std::vector<std::size_t> predict_topk(const ModelParams& params, const ExperimentConfig& config,
                                      const InteractionSequence& prefix, std::size_t k, Task task);

enum class EvalTarget { validation, test };

// Validation scores the train part against the validation interaction; test
// scores train+validation against the test interaction. Inputs are truncated
// to config.max_len most recent steps.
std::pair<EvalResult, EvalResult> evaluate(const ModelParams& params, const ExperimentConfig& config,
                                           std::span<const SplitSequence> splits, EvalTarget target,
                                           std::size_t k = 10);

}  // namespace tmepsr

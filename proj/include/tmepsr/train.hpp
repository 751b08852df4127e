#pragma once

// Adam training loop with per-epoch validation and best-checkpoint retention.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tmepsr/config.hpp"
#include "tmepsr/dataset.hpp"
#include "tmepsr/metrics.hpp"
#include "tmepsr/model.hpp"

namespace tmepsr {

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps, double weight_decay = 0.0);
  // Applies one update from the accumulated gradients.
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double l_rec = 0.0;
  double l_exp = 0.0;
  double j_mi = 0.0;
  EvalResult valid_rec;
  EvalResult valid_exp;
  double seconds = 0.0;
};

struct TrainReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  double initial_loss = 0.0;  // mean batch loss before the first update
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 0 when validation was skipped
  double best_valid_ndcg = 0.0;
};

struct TrainOptions {
  bool validate = true;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  ModelParams params;  // best validation N@10 (rec) epoch, or the last epoch without validation
  TrainReport report;
  std::vector<SplitSequence> splits;
};

std::vector<SplitSequence> split_corpus(const Corpus& corpus);

// Throws NumericError naming the epoch and batch when a loss turns non-finite.
TrainResult train(const Corpus& corpus, const ExperimentConfig& config, const TrainOptions& options = {});

// Mean batch losses over `batches` without updating anything.
EpochStats mean_loss(const std::vector<Batch>& batches, const ModelParams& params, const ExperimentConfig& config);

void write_report_csv(std::ostream& out, const TrainReport& report);

}  // namespace tmepsr

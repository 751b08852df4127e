#pragma once

// Full TME-PSR model: time-aware embeddings, multihead LRU encoders for the
// recommendation and explanation branches, tied-weight prediction layers and
// the MI alignment term.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tmepsr/alignment_mi.hpp"
#include "tmepsr/config.hpp"
#include "tmepsr/dataset.hpp"
#include "tmepsr/multihead_lru.hpp"
#include "tmepsr/tensor.hpp"
#include "tmepsr/time_encoder.hpp"

namespace tmepsr {

struct ModelParams {
  EmbeddingTables tables;  // also the prediction matrices M_V and M_E
  TimeEncoderParams time;
  BranchLruParams lru_rec;
  BranchLruParams lru_exp;
  MiParams mi;
  Tensor bias_rec;  // 1×|V|
  Tensor bias_exp;  // 1×|E|

  std::size_t d() const { return tables.items.cols(); }
  std::size_t item_count() const { return tables.items.rows(); }
  std::size_t expl_count() const { return tables.expls.rows(); }
  std::size_t heads() const { return lru_rec.head_count(); }

  // Stable names, e.g. "lru_rec.head1.nu".
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  // Deep copy with fresh parameter leaves.
  ModelParams clone() const;
  void zero_grad();

  // Calls fn on every tensor slot; fn may replace the tensor.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
};

// Shapes follow config.effective(): H heads per branch, width d.
ModelParams init_model(std::size_t item_count, std::size_t expl_count, const ExperimentConfig& config,
                       std::mt19937_64& rng);

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout and sampled MI candidates
};

struct SequenceOutput {
  TimeAwareEmbeddings embeds;
  EncodedSequence z;
  Tensor logits_rec;  // n×|V|
  Tensor logits_exp;  // n×|E|
  MiWeights mu;       // n×1 each
};

// `config` is used through config.effective().
SequenceOutput forward_sequence(const ModelParams& params, const ExperimentConfig& config,
                                const InteractionSequence& sequence, const ForwardContext& ctx = {});

struct ForwardOutput {
  Tensor logits_rec;  // B×L×|V|, padded positions are zero
  Tensor logits_exp;  // B×L×|E|
  std::vector<SequenceOutput> rows;
};

ForwardOutput forward(const Batch& batch, const ModelParams& params, const ExperimentConfig& config,
                      const ForwardContext& ctx = {});

// Position j of a row is trained to predict interaction j+1; the last real
// position of every row and all padding carry no target.
struct NextStepTargets {
  std::vector<std::size_t> items;  // B·L
  std::vector<std::size_t> expls;  // B·L
  std::vector<bool> mask;          // B·L
  std::size_t valid = 0;
};
NextStepTargets next_step_targets(const Batch& batch);

struct LossParts {
  Tensor total;
  Tensor l_rec;
  Tensor l_exp;
  Tensor j_mi;
};

// L_rec and L_exp: mean cross entropy over every target position in the
// batch. J_MI: mean over rows with at least one target of the per-row term.
LossParts total_loss(const ForwardOutput& out, const Batch& batch, const ModelParams& params,
                     const ExperimentConfig& config, const ForwardContext& ctx = {});

// Per-row MI objective; rows with no target give an undefined tensor.
Tensor sequence_mi(const SequenceOutput& out, const InteractionSequence& sequence, const ModelParams& params,
                   const ExperimentConfig& config, const ForwardContext& ctx = {});

// Logits at the last position of `sequence`, no autodiff.
struct LastScores {
  std::vector<double> rec;
  std::vector<double> exp;
};
LastScores score_last(const ModelParams& params, const ExperimentConfig& config, const InteractionSequence& sequence);

// Per-sequence learned scalars used by the analyses.
struct SequenceDiagnostics {
  double gamma_rec = 0.0;
  double gamma_exp = 0.0;
  double mu_rec = 0.0;  // mean over steps
  double mu_exp = 0.0;
  double mean_gap = 0.0;  // (t_n − t_1)/(n−1) in seconds
};
SequenceDiagnostics diagnose(const ModelParams& params, const ExperimentConfig& config,
                             const InteractionSequence& sequence);

struct Checkpoint {
  ExperimentConfig config;
  ModelParams params;
  Vocabulary items;
  Vocabulary expls;
};
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tmepsr

#include "tmepsr/train.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "tmepsr/errors.hpp"

namespace tmepsr {

namespace {

std::vector<Batch> trainable(std::vector<Batch> batches) {
  std::erase_if(batches, [](const Batch& b) { return next_step_targets(b).valid == 0; });
  return batches;
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch);
}

}  // namespace

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps, double weight_decay)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + weight_decay_ * w[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

std::vector<SplitSequence> split_corpus(const Corpus& corpus) {
  std::vector<SplitSequence> splits;
  splits.reserve(corpus.sequences.size());
  for (const auto& s : corpus.sequences) splits.push_back(split_leave_one_out(s));
  return splits;
}

EpochStats mean_loss(const std::vector<Batch>& batches, const ModelParams& params, const ExperimentConfig& config) {
  EpochStats stats;
  std::mt19937_64 rng(config.seed);
  const ForwardContext ctx{false, &rng};
  for (const Batch& batch : batches) {
    const LossParts parts = total_loss(forward(batch, params, config, ctx), batch, params, config, ctx);
    stats.loss += parts.total.item();
    stats.l_rec += parts.l_rec.item();
    stats.l_exp += parts.l_exp.item();
    stats.j_mi += parts.j_mi.item();
  }
  const double n = static_cast<double>(batches.size());
  stats.loss /= n;
  stats.l_rec /= n;
  stats.l_exp /= n;
  stats.j_mi /= n;
  return stats;
}

TrainResult train(const Corpus& corpus, const ExperimentConfig& config, const TrainOptions& options) {
  if (corpus.sequences.empty()) throw DataError("train: empty corpus");
  const ExperimentConfig cfg = config.effective();
  cfg.validate();

  TrainResult result;
  result.splits = split_corpus(corpus);
  std::vector<InteractionSequence> train_seqs;
  for (const auto& s : result.splits) train_seqs.push_back(s.train);

  std::mt19937_64 rng(cfg.seed);
  ModelParams params = init_model(corpus.items.size(), corpus.expls.size(), cfg, rng);
  Adam adam(params.tensors(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);

  TrainReport& report = result.report;
  report.config_hash = config.hash();
  report.seed = cfg.seed;
  const auto first = trainable(make_batches(train_seqs, cfg.batch_size, cfg.max_len, epoch_seed(cfg.seed, 0)));
  if (first.empty()) throw DataError("train: no sequence has a next-step target");
  report.initial_loss = mean_loss(first, params, cfg).loss;
  result.params = params;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = trainable(make_batches(train_seqs, cfg.batch_size, cfg.max_len, epoch_seed(cfg.seed, epoch)));
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      const ForwardContext ctx{true, &rng};
      Tape tape;
      LossParts parts;
      try {
        parts = total_loss(forward(batch, params, cfg, ctx), batch, params, cfg, ctx);
        if (!std::isfinite(parts.total.item())) throw NumericError("non-finite loss");
        tape.backward(parts.total);
      } catch (const NumericError& e) {
        throw NumericError("divergence at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) + ": " +
                           e.what());
      }
      adam.step();
      adam.zero_grad();
      stats.loss += parts.total.item();
      stats.l_rec += parts.l_rec.item();
      stats.l_exp += parts.l_exp.item();
      stats.j_mi += parts.j_mi.item();
    }
    const double nb = static_cast<double>(batches.size());
    stats.loss /= nb;
    stats.l_rec /= nb;
    stats.l_exp /= nb;
    stats.j_mi /= nb;
    if (options.validate) {
      std::tie(stats.valid_rec, stats.valid_exp) = evaluate(params, cfg, result.splits, EvalTarget::validation, cfg.eval_k);
      if (report.best_epoch == 0 || stats.valid_rec.ndcg > report.best_valid_ndcg) {
        report.best_epoch = epoch;
        report.best_valid_ndcg = stats.valid_rec.ndcg;
        result.params = params.clone();
      }
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
  }
  if (!options.validate || report.best_epoch == 0) result.params = params.clone();
  return result;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,loss,l_rec,l_exp,j_mi,valid_rec_recall,valid_rec_ndcg,valid_exp_recall,valid_exp_ndcg,seconds,"
         "config_hash,seed\n";
  out.precision(17);
  out << 0 << ',' << report.initial_loss << ",,,,,,,,," << report.config_hash << ',' << report.seed << '\n';
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.l_rec << ',' << e.l_exp << ',' << e.j_mi << ',' << e.valid_rec.recall
        << ',' << e.valid_rec.ndcg << ',' << e.valid_exp.recall << ',' << e.valid_exp.ndcg << ',' << e.seconds << ','
        << report.config_hash << ',' << report.seed << '\n';
  }
}

}  // namespace tmepsr

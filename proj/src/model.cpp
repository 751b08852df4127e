#include "tmepsr/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tmepsr/errors.hpp"

namespace tmepsr {

namespace {

constexpr double kEmbeddingStddev = 0.01;

void visit_mlp(const std::string& prefix, MlpParams& p, const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".w1", p.w1);
  fn(prefix + ".b1", p.b1);
  fn(prefix + ".w2", p.w2);
  fn(prefix + ".b2", p.b2);
}

void visit_gru(const std::string& prefix, GruCellParams& p,
               const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".w_z", p.w_z);
  fn(prefix + ".w_r", p.w_r);
  fn(prefix + ".w_h", p.w_h);
  fn(prefix + ".u_z", p.u_z);
  fn(prefix + ".u_r", p.u_r);
  fn(prefix + ".u_h", p.u_h);
  fn(prefix + ".b_z", p.b_z);
  fn(prefix + ".b_r", p.b_r);
  fn(prefix + ".b_h", p.b_h);
}

void visit_branch(const std::string& prefix, BranchLruParams& p,
                  const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const std::string name = prefix + ".head" + std::to_string(h);
    fn(name + ".nu", p.heads[h].nu);
    fn(name + ".theta", p.heads[h].theta);
    fn(name + ".u", p.heads[h].u);
  }
}

Tensor normal_parameter(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor predict(const Tensor& z, const Tensor& table, const Tensor& bias) {
  return ops::add_row_bias(ops::matmul_nt(z, table), bias);
}

Tensor dropout(const Tensor& x, double rate, const ForwardContext& ctx) {
  if (!ctx.training || rate <= 0.0 || ctx.rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = keep(*ctx.rng) ? 1.0 / (1.0 - rate) : 0.0;
  return ops::mul(x, Tensor::constant(x.shape(), std::move(mask)));
}

TimeEncodeInput input_of(const InteractionSequence& s) { return {s.items, s.expls, s.times}; }

}  // namespace

void ModelParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("tables.items", tables.items);
  fn("tables.expls", tables.expls);
  visit_gru("time.gru_adj", time.gru_adj, fn);
  visit_gru("time.gru_abs", time.gru_abs, fn);
  visit_mlp("time.gate_rec", time.gate_rec, fn);
  visit_mlp("time.gate_exp", time.gate_exp, fn);
  visit_branch("lru_rec", lru_rec, fn);
  visit_branch("lru_exp", lru_exp, fn);
  fn("mi.lambda_rec", mi.lambda_rec);
  fn("mi.lambda_exp", mi.lambda_exp);
  visit_mlp("mi.weight_rec", mi.weight_rec, fn);
  visit_mlp("mi.weight_exp", mi.weight_exp, fn);
  visit_mlp("mi.weight_shared", mi.weight_shared, fn);
  fn("bias_rec", bias_rec);
  fn("bias_exp", bias_exp);
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const_cast<ModelParams*>(this)->visit([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  copy.visit([](const std::string&, Tensor& t) {
    t = Tensor::parameter(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
  });
  return copy;
}

void ModelParams::zero_grad() {
  visit([](const std::string&, Tensor& t) { t.zero_grad(); });
}

ModelParams init_model(std::size_t item_count, std::size_t expl_count, const ExperimentConfig& config,
                       std::mt19937_64& rng) {
  const ExperimentConfig cfg = config.effective();
  cfg.validate();
  if (item_count == 0 || expl_count == 0) throw ConfigError("empty vocabulary");
  ModelParams p;
  p.tables.items = normal_parameter({item_count, cfg.d}, kEmbeddingStddev, rng);
  p.tables.expls = normal_parameter({expl_count, cfg.d}, kEmbeddingStddev, rng);
  p.time = init_time_encoder(cfg.d, rng);
  p.lru_rec = init_branch(cfg.d, cfg.H, rng);
  p.lru_exp = init_branch(cfg.d, cfg.H, rng);
  p.mi = init_mi(cfg.d, rng);
  p.bias_rec = Tensor::parameter({1, item_count}, std::vector<double>(item_count, 0.0));
  p.bias_exp = Tensor::parameter({1, expl_count}, std::vector<double>(expl_count, 0.0));
  return p;
}

SequenceOutput forward_sequence(const ModelParams& params, const ExperimentConfig& config,
                                const InteractionSequence& sequence, const ForwardContext& ctx) {
  const ExperimentConfig cfg = config.effective();
  if (sequence.length() == 0) throw DimensionError("forward: empty sequence");
  if (params.heads() != cfg.H) {
    throw ConfigError("model has " + std::to_string(params.heads()) + " heads but config asks for " +
                      std::to_string(cfg.H));
  }
  SequenceOutput out;
  out.embeds = time_aware_embed(input_of(sequence), params.tables, params.time, cfg.alpha, cfg.beta, cfg.time_strategy);
  TimeAwareEmbeddings encoder_in = out.embeds;
  encoder_in.e_rec_time = dropout(encoder_in.e_rec_time, cfg.dropout, ctx);
  encoder_in.e_exp_time = dropout(encoder_in.e_exp_time, cfg.dropout, ctx);
  const LruOptions options{cfg.lru_mode, cfg.lru_normalize};
  out.z = encode(encoder_in, params.lru_rec, params.lru_exp, options);
  out.logits_rec = predict(out.z.z_rec, params.tables.items, params.bias_rec);
  out.logits_exp = predict(out.z.z_exp, params.tables.expls, params.bias_exp);
  out.mu = mi_weights(params.mi, out.z.z_rec, out.z.z_exp, cfg.mi_mode);
  return out;
}

ForwardOutput forward(const Batch& batch, const ModelParams& params, const ExperimentConfig& config,
                      const ForwardContext& ctx) {
  ForwardOutput out;
  const std::size_t L = batch.max_length;
  const std::size_t V = params.item_count(), E = params.expl_count();
  std::vector<Tensor> rec_parts, exp_parts;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    const InteractionSequence row = batch.row(b);
    out.rows.push_back(forward_sequence(params, config, row, ctx));
    rec_parts.push_back(out.rows.back().logits_rec);
    exp_parts.push_back(out.rows.back().logits_exp);
    const std::size_t pad = L - row.length();
    if (pad > 0) {
      rec_parts.push_back(Tensor::zeros({pad, V}));
      exp_parts.push_back(Tensor::zeros({pad, E}));
    }
  }
  out.logits_rec = ops::reshape(ops::concat_rows(rec_parts), {batch.batch_size, L, V});
  out.logits_exp = ops::reshape(ops::concat_rows(exp_parts), {batch.batch_size, L, E});
  return out;
}

NextStepTargets next_step_targets(const Batch& batch) {
  NextStepTargets t;
  const std::size_t cells = batch.batch_size * batch.max_length;
  t.items.assign(cells, 0);
  t.expls.assign(cells, 0);
  t.mask.assign(cells, false);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    for (std::size_t j = 0; j + 1 < batch.lengths[b]; ++j) {
      const std::size_t here = batch.cell(b, j), next = batch.cell(b, j + 1);
      t.items[here] = batch.items[next];
      t.expls[here] = batch.expls[next];
      t.mask[here] = true;
      ++t.valid;
    }
  }
  return t;
}

Tensor sequence_mi(const SequenceOutput& out, const InteractionSequence& sequence, const ModelParams& params,
                   const ExperimentConfig& config, const ForwardContext& ctx) {
  const ExperimentConfig cfg = config.effective();
  const std::size_t n = sequence.length();
  if (n < 2) return {};
  if (cfg.mi_mode == MiMode::disabled) return Tensor::scalar(0.0);
  std::vector<std::size_t> next_items(n, 0), next_expls(n, 0);
  std::vector<bool> mask(n, false);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    next_items[j] = sequence.items[j + 1];
    next_expls[j] = sequence.expls[j + 1];
    mask[j] = true;
  }
  auto term = [&](const Tensor& z_other, const Tensor& table, const Tensor& lambda,
                  const std::vector<std::size_t>& positives) {
    if (cfg.mi_candidates == MiCandidates::sampled) {
      if (ctx.rng == nullptr) throw ConfigError("sampled MI candidates need a random generator");
      const CandidateSet cand = sampled_candidates(positives, mask, table.rows(), cfg.mi_negatives, *ctx.rng);
      return branch_info_nce(z_other, ops::gather_rows(table, cand.rows), lambda, cand.positives, mask);
    }
    return branch_info_nce(z_other, table, lambda, positives, mask);
  };
  // Items are scored from the explanation view and explanations from the item view.
  const Tensor j_rec = term(out.z.z_exp, params.tables.items, params.mi.lambda_rec, next_items);
  const Tensor j_exp = term(out.z.z_rec, params.tables.expls, params.mi.lambda_exp, next_expls);
  return j_mi(out.mu, j_rec, j_exp, mask, cfg.mi_mode);
}

LossParts total_loss(const ForwardOutput& out, const Batch& batch, const ModelParams& params,
                     const ExperimentConfig& config, const ForwardContext& ctx) {
  const ExperimentConfig cfg = config.effective();
  const NextStepTargets targets = next_step_targets(batch);
  if (targets.valid == 0) throw DimensionError("total_loss: batch has no next-step targets");
  LossParts parts;
  parts.l_rec = ops::softmax_cross_entropy(out.logits_rec, targets.items, targets.mask);
  parts.l_exp = ops::softmax_cross_entropy(out.logits_exp, targets.expls, targets.mask);
  const Tensor supervised = ops::add(parts.l_rec, parts.l_exp);
  if (cfg.mi_mode == MiMode::disabled) {
    parts.j_mi = Tensor::scalar(0.0);
    parts.total = supervised;
    return parts;
  }
  std::vector<Tensor> terms;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    Tensor t = sequence_mi(out.rows[b], batch.row(b), params, cfg, ctx);
    if (t.defined()) terms.push_back(t);
  }
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ops::add(acc, terms[i]);
  parts.j_mi = terms.size() == 1 ? acc : ops::scale(acc, 1.0 / static_cast<double>(terms.size()));
  parts.total = ops::add(supervised, parts.j_mi);
  return parts;
}

LastScores score_last(const ModelParams& params, const ExperimentConfig& config, const InteractionSequence& sequence) {
  const SequenceOutput out = forward_sequence(params, config, sequence);
  const std::size_t last = sequence.length() - 1;
  const auto rec = out.logits_rec.data(), exp = out.logits_exp.data();
  const std::size_t V = params.item_count(), E = params.expl_count();
  return {std::vector<double>(rec.begin() + last * V, rec.begin() + (last + 1) * V),
          std::vector<double>(exp.begin() + last * E, exp.begin() + (last + 1) * E)};
}

SequenceDiagnostics diagnose(const ModelParams& params, const ExperimentConfig& config,
                             const InteractionSequence& sequence) {
  const ExperimentConfig cfg = config.effective();
  const SequenceOutput out = forward_sequence(params, cfg, sequence);
  SequenceDiagnostics d;
  if (out.embeds.gamma_rec.defined()) {
    d.gamma_rec = out.embeds.gamma_rec.item();
    d.gamma_exp = out.embeds.gamma_exp.item();
  }
  std::tie(d.mu_rec, d.mu_exp) = mu_summary(out.mu.mu_rec.data(), out.mu.mu_exp.data());
  const std::size_t n = sequence.length();
  if (n > 1) d.mean_gap = double(sequence.times.back() - sequence.times.front()) / double(n - 1);
  return d;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json j;
  j["format"] = "tmepsr-checkpoint";
  j["version"] = 1;
  j["config"] = checkpoint.config.to_map();
  j["config_hash"] = checkpoint.config.hash();
  j["items"] = checkpoint.items.ids();
  j["expls"] = checkpoint.expls.ids();
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : checkpoint.params.named()) {
    tensors[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  j["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "tmepsr-checkpoint" || j.value("version", 0) != 1) {
    throw DataError("unsupported checkpoint format in " + path.string());
  }
  Checkpoint cp;
  for (const auto& [key, value] : j.at("config").items()) cp.config.set(key, value.get<std::string>());
  if (cp.config.hash() != j.at("config_hash").get<std::string>()) {
    throw DataError("checkpoint config hash mismatch in " + path.string());
  }
  cp.items = Vocabulary::from_ids(j.at("items").get<std::vector<std::string>>());
  cp.expls = Vocabulary::from_ids(j.at("expls").get<std::vector<std::string>>());
  std::mt19937_64 rng(0);
  cp.params = init_model(cp.items.size(), cp.expls.size(), cp.config, rng);
  const auto& tensors = j.at("tensors");
  cp.params.visit([&](const std::string& name, Tensor& t) {
    if (!tensors.contains(name)) throw DataError("checkpoint is missing tensor " + name);
    const auto& entry = tensors.at(name);
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != t.shape()) {
      throw DataError("checkpoint tensor " + name + " has shape " + shape_string(shape) + ", expected " +
                      shape_string(t.shape()));
    }
    t = Tensor::parameter(shape, entry.at("data").get<std::vector<double>>());
  });
  return cp;
}

}  // namespace tmepsr

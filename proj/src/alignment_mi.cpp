#include "tmepsr/alignment_mi.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "tmepsr/errors.hpp"

namespace tmepsr {

namespace {

std::vector<std::size_t> valid_rows(const std::vector<bool>& mask) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) rows.push_back(i);
  return rows;
}

Tensor masked_mean(const Tensor& column, const std::vector<bool>& mask) {
  if (column.rows() != mask.size()) throw DimensionError("mask length differs from step count");
  const auto rows = valid_rows(mask);
  if (rows.empty()) throw DimensionError("every step is masked");
  if (rows.size() == column.rows()) return ops::mean_rows(column);
  return ops::mean_rows(ops::gather_rows(column, rows));
}

}  // namespace

std::string to_string(MiMode mode) {
  switch (mode) {
    case MiMode::dynamic_dual: return "dynamic_dual";
    case MiMode::fixed: return "fixed";
    case MiMode::single_shared: return "single_shared";
    case MiMode::disabled: return "disabled";
  }
  return "?";
}

MiMode parse_mi_mode(const std::string& name) {
  for (auto m : {MiMode::dynamic_dual, MiMode::fixed, MiMode::single_shared, MiMode::disabled}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("invalid mi mode '" + name + "' (expected dynamic_dual, fixed, single_shared, disabled)");
}

MiParams init_mi(std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(d)), 1.0 / std::sqrt(double(d)));
  auto square = [&] {
    std::vector<double> v(d * d);
    for (double& x : v) x = dist(rng);
    return Tensor::parameter({d, d}, std::move(v));
  };
  MiParams p;
  p.lambda_rec = square();
  p.lambda_exp = square();
  p.weight_rec = init_mlp(d, d, rng);
  p.weight_exp = init_mlp(d, d, rng);
  p.weight_shared = init_mlp(2 * d, d, rng);
  return p;
}

MiWeights mi_weights(const MiParams& params, const Tensor& z_rec, const Tensor& z_exp, MiMode mode) {
  if (z_rec.shape() != z_exp.shape()) throw DimensionError("mi_weights: Z_rec and Z_exp shapes differ");
  const std::size_t n = z_rec.rows();
  switch (mode) {
    case MiMode::dynamic_dual:
      return {ops::sigmoid(mlp_forward(params.weight_rec, z_rec)), ops::sigmoid(mlp_forward(params.weight_exp, z_exp))};
    case MiMode::single_shared: {
      const Tensor mu = ops::sigmoid(mlp_forward(params.weight_shared, ops::concat_cols({z_rec, z_exp})));
      return {mu, mu};
    }
    case MiMode::fixed:
    case MiMode::disabled:
      break;
  }
  const Tensor half = Tensor::constant({n, 1}, std::vector<double>(n, 0.5));
  return {half, half};
}

Tensor branch_info_nce(const Tensor& z_other, const Tensor& table, const Tensor& lambda,
                       std::span<const std::size_t> positives, const std::vector<bool>& mask) {
  if (lambda.rank() != 2 || lambda.dim(0) != lambda.dim(1) || lambda.dim(0) != z_other.cols() ||
      table.cols() != z_other.cols()) {
    throw DimensionError("branch_info_nce: Λ must be d×d and table rows width d");
  }
  // logits[i, c] = table_c · Λ · Z_i = (Z_i Λᵀ) · table_c
  const Tensor projected = ops::matmul_nt(z_other, lambda);
  const Tensor logits = ops::matmul_nt(projected, table);
  return ops::softmax_cross_entropy(logits, positives, mask);
}

Tensor j_mi(const MiWeights& weights, const Tensor& j_rec, const Tensor& j_exp, const std::vector<bool>& mask,
            MiMode mode) {
  switch (mode) {
    case MiMode::disabled:
      return Tensor::scalar(0.0);
    case MiMode::fixed:
      return ops::scale(ops::add(j_rec, j_exp), kFixedMiWeight);
    case MiMode::single_shared:
      return ops::mul(masked_mean(weights.mu_rec, mask), ops::add(j_rec, j_exp));
    case MiMode::dynamic_dual:
      // (1/n) Σ_i [μ_i^rec·J_rec + μ_i^exp·J_exp] with per-sequence J terms.
      return ops::add(ops::mul(masked_mean(weights.mu_rec, mask), j_rec),
                      ops::mul(masked_mean(weights.mu_exp, mask), j_exp));
  }
  throw ConfigError("invalid mi mode");
}

CandidateSet full_candidates(std::span<const std::size_t> positives) {
  return {{}, std::vector<std::size_t>(positives.begin(), positives.end())};
}

CandidateSet sampled_candidates(std::span<const std::size_t> positives, const std::vector<bool>& mask,
                                std::size_t vocab, std::size_t negatives, std::mt19937_64& rng) {
  CandidateSet set;
  std::unordered_map<std::size_t, std::size_t> slot;
  auto add_row = [&](std::size_t row) {
    auto [it, inserted] = slot.try_emplace(row, set.rows.size());
    if (inserted) set.rows.push_back(row);
    return it->second;
  };
  set.positives.assign(positives.size(), 0);
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (!mask[i]) continue;
    if (positives[i] >= vocab) throw DimensionError("sampled_candidates: positive out of range");
    set.positives[i] = add_row(positives[i]);
  }
  const std::size_t room = vocab - std::min(vocab, set.rows.size());
  const std::size_t want = std::min(negatives, room);
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  std::size_t added = 0;
  while (added < want) {
    const std::size_t row = pick(rng);
    if (slot.contains(row)) continue;
    add_row(row);
    ++added;
  }
  return set;
}

std::pair<double, double> mu_summary(const MiWeights& weights, const std::vector<bool>& mask) {
  std::vector<double> rec, exp;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    rec.push_back(weights.mu_rec.data()[i]);
    exp.push_back(weights.mu_exp.data()[i]);
  }
  return mu_summary(rec, exp);
}

std::pair<double, double> mu_summary(std::span<const double> mu_rec, std::span<const double> mu_exp) {
  if (mu_rec.empty() || mu_exp.empty()) throw DimensionError("mu_summary: empty sequence");
  double sr = 0.0, se = 0.0;
  for (double v : mu_rec) sr += v;
  for (double v : mu_exp) se += v;
  return {sr / double(mu_rec.size()), se / double(mu_exp.size())};
}

}  // namespace tmepsr

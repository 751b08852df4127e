#pragma once

// Dual-branch mutual-information alignment.
//
// Each branch gets a bilinear InfoNCE term: the other branch's representation
// Z_i scores every candidate row c of an embedding table as table_c · Λ · Z_i,
// and the loss is the cross entropy of the step's positive candidate. Per-step
// weights μ_i = σ(MLP(Z_i)) scale the two terms.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmepsr/tensor.hpp"
#include "tmepsr/time_encoder.hpp"

namespace tmepsr {

struct MiParams {
  Tensor lambda_rec;       // d×d, scores items against Z_exp
  Tensor lambda_exp;       // d×d, scores explanations against Z_rec
  MlpParams weight_rec;    // d → d → 1
  MlpParams weight_exp;    // d → d → 1
  MlpParams weight_shared; // 2d → d → 1, only read in single_shared mode
};

enum class MiMode { dynamic_dual, fixed, single_shared, disabled };

std::string to_string(MiMode mode);
MiMode parse_mi_mode(const std::string& name);

// Weight used by MiMode::fixed on the sum of the two branch terms.
inline constexpr double kFixedMiWeight = 0.001;

struct MiWeights {
  Tensor mu_rec;  // n×1
  Tensor mu_exp;  // n×1
};

MiParams init_mi(std::size_t d, std::mt19937_64& rng);

// dynamic_dual: separate per-branch MLPs. single_shared: one MLP over
// [Z_rec, Z_exp] and the same μ for both branches. Other modes: constants 0.5
// that carry no gradient (not read by j_mi).
MiWeights mi_weights(const MiParams& params, const Tensor& z_rec, const Tensor& z_exp, MiMode mode);

// Mean over unmasked steps of −log softmax_c(table_c · Λ · Z_i)[positive_i].
Tensor branch_info_nce(const Tensor& z_other, const Tensor& table, const Tensor& lambda,
                       std::span<const std::size_t> positives, const std::vector<bool>& mask);

// Per-sequence MI objective from the branch terms j_rec, j_exp (1×1 tensors).
Tensor j_mi(const MiWeights& weights, const Tensor& j_rec, const Tensor& j_exp, const std::vector<bool>& mask,
            MiMode mode);

// Candidate rows for one branch term: full vocabulary, or the distinct
// positives plus `negatives` uniformly drawn other rows.
struct CandidateSet {
  std::vector<std::size_t> rows;       // indices into the full table; empty means all rows
  std::vector<std::size_t> positives;  // per step, index into `rows` (or the full table)
};
CandidateSet full_candidates(std::span<const std::size_t> positives);
CandidateSet sampled_candidates(std::span<const std::size_t> positives, const std::vector<bool>& mask,
                                std::size_t vocab, std::size_t negatives, std::mt19937_64& rng);

// Arithmetic mean of μ over unmasked steps, per branch.
std::pair<double, double> mu_summary(const MiWeights& weights, const std::vector<bool>& mask);
std::pair<double, double> mu_summary(std::span<const double> mu_rec, std::span<const double> mu_exp);

}  // namespace tmepsr

#pragma once

// Multihead linear recurrent encoder.
//
// Each head owns a complex diagonal transition λ_j = exp(−exp(ν_j) + iθ_j)
// (|λ_j| < 1 for every finite ν) and a dense real output projection U:
//   s_i = λ ⊙ s_{i−1} + c ⊙ x_i,   h_i = Re(s_i) · U
// where c_j = sqrt(1 − |λ_j|²) when input normalization is on and 1 otherwise.
// This equals the explicit sum h_i = Σ_{k≤i} x_k W^{i−k} U with W = diag(λ).
//
// Embeddings of width d are split into H slices of width d/H, one head per
// slice and per branch; the head outputs are concatenated back to width d.

#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tmepsr/tensor.hpp"

namespace tmepsr {

struct TimeAwareEmbeddings;

struct HeadParams {
  Tensor nu;     // 1×k, log of the decay rate
  Tensor theta;  // 1×k, phase
  Tensor u;      // k×k output projection

  std::size_t width() const { return nu.cols(); }
  std::vector<Tensor> tensors() const { return {nu, theta, u}; }
};

struct BranchLruParams {
  std::vector<HeadParams> heads;
  std::size_t head_count() const { return heads.size(); }
};

enum class LruMode { scan, sequential };

std::string to_string(LruMode mode);
LruMode parse_lru_mode(const std::string& name);

struct LruOptions {
  LruMode mode = LruMode::scan;
  bool normalize = true;
};

// |λ| uniform in [0.7, 0.99], θ uniform in [0, π/8], U uniform(±1/√k).
HeadParams init_head(std::size_t width, std::mt19937_64& rng);
BranchLruParams init_branch(std::size_t d, std::size_t heads, std::mt19937_64& rng);

std::vector<std::complex<double>> eigenvalues(const HeadParams& params);
std::vector<double> input_scale(const HeadParams& params, bool normalize);

// n×k → n×k, differentiable in x, ν, θ and U.
Tensor head_forward(const HeadParams& params, const Tensor& x, const LruOptions& options);
Tensor head_forward_sequential(const HeadParams& params, const Tensor& x, bool normalize = true);
Tensor head_forward_scan(const HeadParams& params, const Tensor& x, bool normalize = true);

// Splits x (n×d) into H slices, runs one head per slice, concatenates.
Tensor encode_branch(const Tensor& x, const BranchLruParams& params, const LruOptions& options);

struct EncodedSequence {
  Tensor z_rec;  // n×d
  Tensor z_exp;  // n×d
};

EncodedSequence encode(const TimeAwareEmbeddings& embeds, const BranchLruParams& rec, const BranchLruParams& exp,
                       const LruOptions& options);

// Incremental inference for one branch: advancing by one step costs
// O(H·(d/H)²) per row regardless of how many steps came before.
class MultiheadState {
 public:
  MultiheadState(const BranchLruParams& params, std::size_t batch = 1, bool normalize = true);

  // x is batch×d (row-major); returns batch×d outputs for this step.
  std::vector<double> step(std::span<const double> x);
  void step_into(std::span<const double> x, std::span<double> out);
  void reset();

  std::size_t steps() const { return steps_; }
  std::size_t width() const { return d_; }
  std::size_t batch() const { return batch_; }
  // Complex state of head h for batch row b.
  std::span<const std::complex<double>> state(std::size_t head, std::size_t b = 0) const;

 private:
  struct Head {
    std::vector<std::complex<double>> lambda;
    std::vector<double> scale;
    std::vector<double> u;  // k×k
  };
  std::vector<Head> heads_;
  std::size_t k_ = 0, d_ = 0, batch_ = 1, steps_ = 0;
  std::vector<std::complex<double>> state_;  // [head][batch][k]
  std::vector<double> real_;                 // scratch: batch×k
};

struct ParamCount {
  std::size_t per_branch = 0;     // H·((d/H)² + 2·(d/H))
  std::size_t total = 0;          // per_branch × branches
  std::size_t dominant_term = 0;  // d²/H per branch
};

ParamCount param_count(std::size_t d, std::size_t heads, std::size_t branches = 2);

}  // namespace tmepsr

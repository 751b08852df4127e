#pragma once

// Dual-view gated time encoder: base embeddings mixed from item and
// explanation tables, log-interval features encoded by two GRUs, and a
// per-sequence gate per branch that fuses short- and long-term features.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmepsr/tensor.hpp"

namespace tmepsr {

struct EmbeddingTables {
  Tensor items;  // |V|×d
  Tensor expls;  // |E|×d
};

struct IntervalVectors {
  std::vector<double> adj;  // log(1 + t_i - t_{i-1}), leading 0
  std::vector<double> abs;  // log(1 + t_i - t_1), leading 0
};

// GRU with scalar input and hidden width d, row-vector convention:
//   z = σ(x·w_z + h·U_z + b_z), r = σ(x·w_r + h·U_r + b_r)
//   h̃ = tanh(x·w_h + (r⊙h)·U_h + b_h), h' = z⊙h + (1−z)⊙h̃
struct GruCellParams {
  Tensor w_z, w_r, w_h;  // 1×d
  Tensor u_z, u_r, u_h;  // d×d
  Tensor b_z, b_r, b_h;  // 1×d

  std::size_t hidden() const { return w_z.cols(); }
  std::vector<Tensor> tensors() const { return {w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h}; }
};

// in → hidden (tanh) → 1, no output activation.
struct MlpParams {
  Tensor w1;  // in×hidden
  Tensor b1;  // 1×hidden
  Tensor w2;  // hidden×1
  Tensor b2;  // 1×1

  std::vector<Tensor> tensors() const { return {w1, b1, w2, b2}; }
};
using GateMlpParams = MlpParams;

struct TimeEncoderParams {
  GruCellParams gru_adj;
  GruCellParams gru_abs;
  GateMlpParams gate_rec;
  GateMlpParams gate_exp;
};

enum class TimeStrategy { gated, abs_only, adj_only, equal, disabled };

std::string to_string(TimeStrategy s);
TimeStrategy parse_time_strategy(const std::string& name);

struct TimeAwareEmbeddings {
  Tensor e_rec, e_exp;            // base embeddings, n×d
  Tensor e_rec_time, e_exp_time;  // inputs to the sequence encoder, n×d
  Tensor gamma_rec, gamma_exp;    // 1×1; undefined when the strategy is disabled
};

GruCellParams init_gru(std::size_t hidden, std::mt19937_64& rng);
MlpParams init_mlp(std::size_t in, std::size_t hidden, std::mt19937_64& rng);
TimeEncoderParams init_time_encoder(std::size_t d, std::mt19937_64& rng);

// E_rec = α·E_V + (1−α)·E_E and E_exp = α·E_E + (1−α)·E_V over the gathered rows.
std::pair<Tensor, Tensor> base_embeddings(std::span<const std::size_t> items, std::span<const std::size_t> expls,
                                          const EmbeddingTables& tables, double alpha);

IntervalVectors intervals(std::span<const std::int64_t> times);

// Runs the GRU over an n×1 input column from a zero state; returns stacked h_1..h_n (n×d).
Tensor gru_encode(const GruCellParams& params, const Tensor& inputs);

Tensor mlp_forward(const MlpParams& params, const Tensor& x);

// σ(MLP(mean over rows of base)) as a 1×1 tensor.
Tensor gate(const GateMlpParams& params, const Tensor& base);

// γ·H_adj + (1−γ)·H_abs with γ a 1×1 tensor.
Tensor fuse(const Tensor& h_adj, const Tensor& h_abs, const Tensor& gamma);

struct TimeEncodeInput {
  std::span<const std::size_t> items;
  std::span<const std::size_t> expls;
  std::span<const std::int64_t> times;
};

TimeAwareEmbeddings time_aware_embed(const TimeEncodeInput& sequence, const EmbeddingTables& tables,
                                     const TimeEncoderParams& params, double alpha, double beta,
                                     TimeStrategy strategy);

}  // namespace tmepsr

#include "tmepsr/time_encoder.hpp"

#include <cmath>

#include "tmepsr/errors.hpp"
#include "tmepsr/kernels.hpp"

namespace tmepsr {

namespace {

std::vector<double> uniform_values(std::size_t n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// row[d] += x[d] · M[d×d]
void add_row_times_matrix(const double* x, const double* m, double* row, std::size_t d) {
  kernels::serial::gemm_nn(1, d, d, x, m, row, true);
}

// row[d] += g[d] · M[d×d]ᵀ
void add_row_times_matrix_t(const double* g, const double* m, double* row, std::size_t d) {
  kernels::serial::gemm_nt(1, d, d, g, m, row, true);
}

// M[d×d] += aᵀ·b for rows a, b
void add_outer(const double* a, const double* b, double* m, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) m[i * d + j] += ai * b[j];
  }
}

}  // namespace

std::string to_string(TimeStrategy s) {
  switch (s) {
    case TimeStrategy::gated: return "gated";
    case TimeStrategy::abs_only: return "abs_only";
    case TimeStrategy::adj_only: return "adj_only";
    case TimeStrategy::equal: return "equal";
    case TimeStrategy::disabled: return "disabled";
  }
  return "?";
}

TimeStrategy parse_time_strategy(const std::string& name) {
  for (auto s : {TimeStrategy::gated, TimeStrategy::abs_only, TimeStrategy::adj_only, TimeStrategy::equal,
                 TimeStrategy::disabled}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("invalid time strategy '" + name + "' (expected gated, abs_only, adj_only, equal, disabled)");
}

GruCellParams init_gru(std::size_t hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  const std::size_t d = hidden;
  GruCellParams p;
  p.w_z = Tensor::parameter({1, d}, uniform_values(d, bound, rng));
  p.w_r = Tensor::parameter({1, d}, uniform_values(d, bound, rng));
  p.w_h = Tensor::parameter({1, d}, uniform_values(d, bound, rng));
  p.u_z = Tensor::parameter({d, d}, uniform_values(d * d, bound, rng));
  p.u_r = Tensor::parameter({d, d}, uniform_values(d * d, bound, rng));
  p.u_h = Tensor::parameter({d, d}, uniform_values(d * d, bound, rng));
  p.b_z = Tensor::parameter({1, d}, std::vector<double>(d, 0.0));
  p.b_r = Tensor::parameter({1, d}, std::vector<double>(d, 0.0));
  p.b_h = Tensor::parameter({1, d}, std::vector<double>(d, 0.0));
  return p;
}

MlpParams init_mlp(std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
  MlpParams p;
  p.w1 = Tensor::parameter({in, hidden}, uniform_values(in * hidden, 1.0 / std::sqrt(double(in)), rng));
  p.b1 = Tensor::parameter({1, hidden}, std::vector<double>(hidden, 0.0));
  p.w2 = Tensor::parameter({hidden, 1}, uniform_values(hidden, 1.0 / std::sqrt(double(hidden)), rng));
  p.b2 = Tensor::parameter({1, 1}, {0.0});
  return p;
}

TimeEncoderParams init_time_encoder(std::size_t d, std::mt19937_64& rng) {
  TimeEncoderParams p;
  p.gru_adj = init_gru(d, rng);
  p.gru_abs = init_gru(d, rng);
  p.gate_rec = init_mlp(d, d, rng);
  p.gate_exp = init_mlp(d, d, rng);
  return p;
}

std::pair<Tensor, Tensor> base_embeddings(std::span<const std::size_t> items, std::span<const std::size_t> expls,
                                          const EmbeddingTables& tables, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0,1]");
  if (items.size() != expls.size()) throw DimensionError("base_embeddings: item and explanation counts differ");
  const Tensor ev = ops::gather_rows(tables.items, items);
  const Tensor ee = ops::gather_rows(tables.expls, expls);
  Tensor e_rec = ops::add(ops::scale(ev, alpha), ops::scale(ee, 1.0 - alpha));
  Tensor e_exp = ops::add(ops::scale(ee, alpha), ops::scale(ev, 1.0 - alpha));
  return {e_rec, e_exp};
}

IntervalVectors intervals(std::span<const std::int64_t> times) {
  IntervalVectors out;
  out.adj.assign(times.size(), 0.0);
  out.abs.assign(times.size(), 0.0);
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] < times[i - 1]) {
      throw DataError("timestamps decrease at step " + std::to_string(i) + " (" + std::to_string(times[i - 1]) +
                      " > " + std::to_string(times[i]) + ")");
    }
    out.adj[i] = std::log1p(static_cast<double>(times[i] - times[i - 1]));
    out.abs[i] = std::log1p(static_cast<double>(times[i] - times[0]));
  }
  return out;
}

Tensor gru_encode(const GruCellParams& params, const Tensor& inputs) {
  const std::size_t d = params.hidden();
  if (inputs.cols() != 1) throw DimensionError("gru_encode expects an n×1 input column");
  const std::size_t n = inputs.rows();
  const auto x = inputs.data();
  const double* wz = params.w_z.data().data();
  const double* wr = params.w_r.data().data();
  const double* wh = params.w_h.data().data();
  const double* uz = params.u_z.data().data();
  const double* ur = params.u_r.data().data();
  const double* uh = params.u_h.data().data();
  const double* bz = params.b_z.data().data();
  const double* br = params.b_r.data().data();
  const double* bh = params.b_h.data().data();

  // Gate activations per step are kept for the backward pass.
  std::vector<double> h(n * d), z(n * d), r(n * d), c(n * d);
  std::vector<double> prev(d, 0.0), az(d), ar(d), ah(d), rh(d);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      az[j] = x[t] * wz[j] + bz[j];
      ar[j] = x[t] * wr[j] + br[j];
      ah[j] = x[t] * wh[j] + bh[j];
    }
    add_row_times_matrix(prev.data(), uz, az.data(), d);
    add_row_times_matrix(prev.data(), ur, ar.data(), d);
    double* zt = z.data() + t * d;
    double* rt = r.data() + t * d;
    double* ct = c.data() + t * d;
    double* ht = h.data() + t * d;
    for (std::size_t j = 0; j < d; ++j) {
      zt[j] = sigmoid(az[j]);
      rt[j] = sigmoid(ar[j]);
      rh[j] = rt[j] * prev[j];
    }
    add_row_times_matrix(rh.data(), uh, ah.data(), d);
    for (std::size_t j = 0; j < d; ++j) {
      ct[j] = std::tanh(ah[j]);
      ht[j] = zt[j] * prev[j] + (1.0 - zt[j]) * ct[j];
    }
    std::copy(ht, ht + d, prev.begin());
  }

  std::vector<Tensor> inputs_list{inputs};
  for (const auto& t : params.tensors()) inputs_list.push_back(t);
  return make_op_result(
      {n, d}, h, std::move(inputs_list),
      [n, d, h, z, r, c](detail::Node& self) {
        auto target = [&](std::size_t i) -> double* {
          detail::Node* node = self.inputs[i].get();
          return node->requires_grad ? node->grad_buffer().data() : nullptr;
        };
        const auto& xv = self.inputs[0]->value;
        const double* wz = self.inputs[1]->value.data();
        const double* wr = self.inputs[2]->value.data();
        const double* wh = self.inputs[3]->value.data();
        const double* uz = self.inputs[4]->value.data();
        const double* ur = self.inputs[5]->value.data();
        const double* uh = self.inputs[6]->value.data();
        double* gx = target(0);
        double* gwz = target(1);
        double* gwr = target(2);
        double* gwh = target(3);
        double* guz = target(4);
        double* gur = target(5);
        double* guh = target(6);
        double* gbz = target(7);
        double* gbr = target(8);
        double* gbh = target(9);

        std::vector<double> dh_next(d, 0.0), dh(d), daz(d), dar(d), dah(d), drh(d), rh(d);
        const std::vector<double> zeros(d, 0.0);
        for (std::size_t t = n; t-- > 0;) {
          const double* hp = t > 0 ? h.data() + (t - 1) * d : zeros.data();
          const double* zt = z.data() + t * d;
          const double* rt = r.data() + t * d;
          const double* ct = c.data() + t * d;
          for (std::size_t j = 0; j < d; ++j) dh[j] = self.grad[t * d + j] + dh_next[j];
          for (std::size_t j = 0; j < d; ++j) {
            const double dz = dh[j] * (hp[j] - ct[j]);
            const double dc = dh[j] * (1.0 - zt[j]);
            dh_next[j] = dh[j] * zt[j];
            dah[j] = dc * (1.0 - ct[j] * ct[j]);
            daz[j] = dz * zt[j] * (1.0 - zt[j]);
            rh[j] = rt[j] * hp[j];
          }
          std::fill(drh.begin(), drh.end(), 0.0);
          add_row_times_matrix_t(dah.data(), uh, drh.data(), d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dr = drh[j] * hp[j];
            dh_next[j] += drh[j] * rt[j];
            dar[j] = dr * rt[j] * (1.0 - rt[j]);
          }
          add_row_times_matrix_t(dar.data(), ur, dh_next.data(), d);
          add_row_times_matrix_t(daz.data(), uz, dh_next.data(), d);

          const double xt = xv[t];
          if (gx) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += daz[j] * wz[j] + dar[j] * wr[j] + dah[j] * wh[j];
            gx[t] += acc;
          }
          for (std::size_t j = 0; j < d; ++j) {
            if (gwz) gwz[j] += xt * daz[j];
            if (gwr) gwr[j] += xt * dar[j];
            if (gwh) gwh[j] += xt * dah[j];
            if (gbz) gbz[j] += daz[j];
            if (gbr) gbr[j] += dar[j];
            if (gbh) gbh[j] += dah[j];
          }
          if (guz) add_outer(hp, daz.data(), guz, d);
          if (gur) add_outer(hp, dar.data(), gur, d);
          if (guh) add_outer(rh.data(), dah.data(), guh, d);
        }
      },
      "gru_encode");
}

Tensor mlp_forward(const MlpParams& params, const Tensor& x) {
  const Tensor hidden = ops::tanh(ops::add_row_bias(ops::matmul(x, params.w1), params.b1));
  return ops::add_row_bias(ops::matmul(hidden, params.w2), params.b2);
}

Tensor gate(const GateMlpParams& params, const Tensor& base) {
  return ops::sigmoid(mlp_forward(params, ops::mean_rows(base)));
}

Tensor fuse(const Tensor& h_adj, const Tensor& h_abs, const Tensor& gamma) {
  if (gamma.size() != 1) throw DimensionError("fuse: gamma must be a scalar");
  const Tensor one_minus = ops::add_scalar(ops::scale(gamma, -1.0), 1.0);
  return ops::add(ops::mul(gamma, h_adj), ops::mul(one_minus, h_abs));
}

TimeAwareEmbeddings time_aware_embed(const TimeEncodeInput& sequence, const EmbeddingTables& tables,
                                     const TimeEncoderParams& params, double alpha, double beta,
                                     TimeStrategy strategy) {
  if (beta < 0.0) throw ConfigError("beta must be non-negative");
  if (sequence.times.size() != sequence.items.size()) throw DimensionError("time_aware_embed: length mismatch");
  TimeAwareEmbeddings out;
  std::tie(out.e_rec, out.e_exp) = base_embeddings(sequence.items, sequence.expls, tables, alpha);
  if (strategy == TimeStrategy::disabled) {
    out.e_rec_time = out.e_rec;
    out.e_exp_time = out.e_exp;
    return out;
  }

  switch (strategy) {
    case TimeStrategy::gated:
      out.gamma_rec = gate(params.gate_rec, out.e_rec);
      out.gamma_exp = gate(params.gate_exp, out.e_exp);
      break;
    case TimeStrategy::abs_only:
      out.gamma_rec = out.gamma_exp = Tensor::scalar(0.0);
      break;
    case TimeStrategy::adj_only:
      out.gamma_rec = out.gamma_exp = Tensor::scalar(1.0);
      break;
    case TimeStrategy::equal:
      out.gamma_rec = out.gamma_exp = Tensor::scalar(0.5);
      break;
    case TimeStrategy::disabled:
      break;
  }
  if (beta == 0.0) {
    out.e_rec_time = out.e_rec;
    out.e_exp_time = out.e_exp;
    return out;
  }

  const std::size_t n = sequence.times.size();
  const IntervalVectors iv = intervals(sequence.times);
  const Tensor h_adj = gru_encode(params.gru_adj, Tensor::constant({n, 1}, iv.adj));
  const Tensor h_abs = gru_encode(params.gru_abs, Tensor::constant({n, 1}, iv.abs));
  const Tensor tilde_rec = fuse(h_adj, h_abs, out.gamma_rec);
  const Tensor tilde_exp = fuse(h_adj, h_abs, out.gamma_exp);
  out.e_rec_time = ops::add(out.e_rec, ops::scale(tilde_rec, beta));
  out.e_exp_time = ops::add(out.e_exp, ops::scale(tilde_exp, beta));
  return out;
}

}  // namespace tmepsr

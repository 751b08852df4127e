#include "tmepsr/multihead_lru.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tmepsr/errors.hpp"
#include "tmepsr/kernels.hpp"
#include "tmepsr/time_encoder.hpp"

namespace tmepsr {

using cplx = std::complex<double>;

namespace {

void run_scan(LruMode mode, std::span<const cplx> lambda, std::span<const cplx> u, std::span<cplx> s,
              std::size_t n) {
  if (mode == LruMode::scan) {
    kernels::parallel::linear_scan(lambda, u, s, n);
  } else {
    kernels::serial::linear_scan(lambda, u, s, n);
  }
}

}  // namespace

std::string to_string(LruMode mode) { return mode == LruMode::scan ? "scan" : "sequential"; }

LruMode parse_lru_mode(const std::string& name) {
  if (name == "scan") return LruMode::scan;
  if (name == "sequential") return LruMode::sequential;
  throw ConfigError("invalid lru mode '" + name + "' (expected scan, sequential)");
}

HeadParams init_head(std::size_t width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> radius(0.7, 0.99);
  std::uniform_real_distribution<double> phase(0.0, std::numbers::pi / 8.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  std::uniform_real_distribution<double> proj(-bound, bound);
  std::vector<double> nu(width), theta(width), u(width * width);
  for (std::size_t j = 0; j < width; ++j) {
    nu[j] = std::log(-std::log(radius(rng)));
    theta[j] = phase(rng);
  }
  for (double& v : u) v = proj(rng);
  return {Tensor::parameter({1, width}, std::move(nu)), Tensor::parameter({1, width}, std::move(theta)),
          Tensor::parameter({width, width}, std::move(u))};
}

BranchLruParams init_branch(std::size_t d, std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("embedding size " + std::to_string(d) + " is not divisible by head count " +
                      std::to_string(heads));
  }
  BranchLruParams out;
  for (std::size_t h = 0; h < heads; ++h) out.heads.push_back(init_head(d / heads, rng));
  return out;
}

std::vector<cplx> eigenvalues(const HeadParams& params) {
  const auto nu = params.nu.data();
  const auto theta = params.theta.data();
  std::vector<cplx> lambda(nu.size());
  for (std::size_t j = 0; j < nu.size(); ++j) lambda[j] = std::polar(std::exp(-std::exp(nu[j])), theta[j]);
  return lambda;
}

std::vector<double> input_scale(const HeadParams& params, bool normalize) {
  const auto nu = params.nu.data();
  std::vector<double> c(nu.size(), 1.0);
  if (!normalize) return c;
  for (std::size_t j = 0; j < nu.size(); ++j) {
    const double m = std::exp(-std::exp(nu[j]));
    c[j] = std::sqrt(1.0 - m * m);
  }
  return c;
}

Tensor head_forward(const HeadParams& params, const Tensor& x, const LruOptions& options) {
  const std::size_t k = params.width();
  if (x.cols() != k) {
    throw DimensionError("head_forward: input width " + std::to_string(x.cols()) + " but head width " +
                         std::to_string(k));
  }
  const std::size_t n = x.rows();
  const auto lambda = eigenvalues(params);
  const auto scale = input_scale(params, options.normalize);
  const auto xv = x.data();

  std::vector<cplx> u(n * k), s(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) u[i * k + j] = cplx(scale[j] * xv[i * k + j], 0.0);
  run_scan(options.mode, lambda, u, s, n);

  std::vector<double> real(n * k), out(n * k);
  for (std::size_t i = 0; i < n * k; ++i) real[i] = s[i].real();
  kernels::gemm_nn(n, k, k, real.data(), params.u.data().data(), out.data(), false);

  const LruMode mode = options.mode;
  const bool normalize = options.normalize;
  return make_op_result(
      {n, k}, std::move(out), {x, params.nu, params.theta, params.u},
      [n, k, lambda, scale, s = std::move(s), real = std::move(real), mode, normalize](detail::Node& self) {
        detail::Node* nx = self.inputs[0].get();
        detail::Node* nnu = self.inputs[1].get();
        detail::Node* ntheta = self.inputs[2].get();
        detail::Node* nu_proj = self.inputs[3].get();
        const double* g = self.grad.data();

        if (nu_proj->requires_grad) {
          kernels::gemm_tn(k, k, n, real.data(), g, nu_proj->grad_buffer().data(), true);
        }
        if (!nx->requires_grad && !nnu->requires_grad && !ntheta->requires_grad) return;

        // dr = dh · Uᵀ, then the adjoint state g_i = dr_i + conj(λ) g_{i+1}
        // is a linear scan run over reversed time.
        std::vector<double> dr(n * k);
        kernels::gemm_nt(n, k, k, g, nu_proj->value.data(), dr.data(), false);
        std::vector<cplx> conj_lambda(k), rev_in(n * k), rev_out(n * k);
        for (std::size_t j = 0; j < k; ++j) conj_lambda[j] = std::conj(lambda[j]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j) rev_in[(n - 1 - i) * k + j] = cplx(dr[i * k + j], 0.0);
        run_scan(mode, conj_lambda, rev_in, rev_out, n);
        auto adjoint = [&](std::size_t i, std::size_t j) { return rev_out[(n - 1 - i) * k + j]; };

        if (nx->requires_grad) {
          auto gx = nx->grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += scale[j] * adjoint(i, j).real();
        }
        if (!nnu->requires_grad && !ntheta->requires_grad) return;

        const auto& xv = nx->value;
        const auto& nu = nnu->value;
        std::vector<double> dp(k, 0.0), dq(k, 0.0), dc(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const cplx gij = adjoint(i, j);
            dc[j] += gij.real() * xv[i * k + j];
            if (i > 0) {
              const cplx t = gij * std::conj(s[(i - 1) * k + j]);
              dp[j] += t.real();
              dq[j] += t.imag();
            }
          }
        }
        for (std::size_t j = 0; j < k; ++j) {
          const double p = lambda[j].real(), q = lambda[j].imag();
          const double rate = std::exp(nu[j]);
          if (nnu->requires_grad) {
            double dnu = -rate * (dp[j] * p + dq[j] * q);
            if (normalize) {
              const double m2 = p * p + q * q;
              dnu += dc[j] * rate * m2 / scale[j];
            }
            nnu->grad_buffer()[j] += dnu;
          }
          if (ntheta->requires_grad) ntheta->grad_buffer()[j] += -dp[j] * q + dq[j] * p;
        }
      },
      "lru_head");
}

Tensor head_forward_sequential(const HeadParams& params, const Tensor& x, bool normalize) {
  return head_forward(params, x, {LruMode::sequential, normalize});
}

Tensor head_forward_scan(const HeadParams& params, const Tensor& x, bool normalize) {
  return head_forward(params, x, {LruMode::scan, normalize});
}

Tensor encode_branch(const Tensor& x, const BranchLruParams& params, const LruOptions& options) {
  const std::size_t heads = params.head_count();
  if (heads == 0 || x.cols() % heads != 0) {
    throw DimensionError("encode: width " + std::to_string(x.cols()) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (heads == 1) return head_forward(params.heads[0], x, options);
  const auto slices = ops::split_cols(x, heads);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) outs.push_back(head_forward(params.heads[h], slices[h], options));
  return ops::concat_cols(outs);
}

EncodedSequence encode(const TimeAwareEmbeddings& embeds, const BranchLruParams& rec, const BranchLruParams& exp,
                       const LruOptions& options) {
  return {encode_branch(embeds.e_rec_time, rec, options), encode_branch(embeds.e_exp_time, exp, options)};
}

MultiheadState::MultiheadState(const BranchLruParams& params, std::size_t batch, bool normalize)
    : batch_(batch) {
  if (params.heads.empty()) throw DimensionError("MultiheadState: no heads");
  k_ = params.heads.front().width();
  for (const auto& hp : params.heads) {
    if (hp.width() != k_) throw DimensionError("MultiheadState: heads differ in width");
    Head h;
    h.lambda = eigenvalues(hp);
    h.scale = input_scale(hp, normalize);
    h.u.assign(hp.u.data().begin(), hp.u.data().end());
    heads_.push_back(std::move(h));
  }
  d_ = k_ * heads_.size();
  state_.assign(heads_.size() * batch_ * k_, cplx(0.0, 0.0));
  real_.assign(batch_ * k_, 0.0);
}

void MultiheadState::reset() {
  std::fill(state_.begin(), state_.end(), cplx(0.0, 0.0));
  steps_ = 0;
}

std::span<const cplx> MultiheadState::state(std::size_t head, std::size_t b) const {
  return std::span<const cplx>(state_).subspan((head * batch_ + b) * k_, k_);
}

std::vector<double> MultiheadState::step(std::span<const double> x) {
  std::vector<double> out(batch_ * d_);
  step_into(x, out);
  return out;
}

void MultiheadState::step_into(std::span<const double> x, std::span<double> out) {
  if (x.size() != batch_ * d_ || out.size() != batch_ * d_) throw DimensionError("MultiheadState::step: bad width");
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const Head& head = heads_[h];
    cplx* st = state_.data() + h * batch_ * k_;
    for (std::size_t b = 0; b < batch_; ++b) {
      const double* xr = x.data() + b * d_ + h * k_;
      cplx* sb = st + b * k_;
      double* rb = real_.data() + b * k_;
      for (std::size_t j = 0; j < k_; ++j) {
        sb[j] = head.lambda[j] * sb[j] + head.scale[j] * xr[j];
        rb[j] = sb[j].real();
      }
    }
    // out[:, h·k:(h+1)·k] = Re(s) · U, one k×k product per head
    for (std::size_t b = 0; b < batch_; ++b) {
      double* ob = out.data() + b * d_ + h * k_;
      std::fill(ob, ob + k_, 0.0);
      kernels::serial::gemm_nn(1, k_, k_, real_.data() + b * k_, head.u.data(), ob, true);
    }
  }
  ++steps_;
}

ParamCount param_count(std::size_t d, std::size_t heads, std::size_t branches) {
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("param_count: " + std::to_string(d) + " not divisible by " + std::to_string(heads));
  }
  const std::size_t k = d / heads;
  ParamCount pc;
  pc.per_branch = heads * (k * k + 2 * k);
  pc.total = pc.per_branch * branches;
  pc.dominant_term = d * d / heads;
  return pc;
}

}  // namespace tmepsr

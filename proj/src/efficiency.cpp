#include "tmepsr/efficiency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <ostream>
#include <random>

#include "tmepsr/errors.hpp"
#include "tmepsr/kernels.hpp"
#include "tmepsr/time_encoder.hpp"

namespace tmepsr {

namespace {

std::vector<double> random_values(std::size_t count, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(count);
  for (double& x : v) x = dist(rng);
  return v;
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Batched incremental GRU over scalar inputs, same cell as the interval encoder.
class GruState {
 public:
  GruState(const GruCellParams& p, std::size_t batch) : d_(p.hidden()), batch_(batch) {
    auto copy = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
    wz_ = copy(p.w_z), wr_ = copy(p.w_r), wh_ = copy(p.w_h);
    uz_ = copy(p.u_z), ur_ = copy(p.u_r), uh_ = copy(p.u_h);
    bz_ = copy(p.b_z), br_ = copy(p.b_r), bh_ = copy(p.b_h);
    h_.assign(batch_ * d_, 0.0);
    z_.resize(batch_ * d_);
    r_.resize(batch_ * d_);
    rh_.resize(batch_ * d_);
    c_.resize(batch_ * d_);
  }

  void step(std::span<const double> x) {
    kernels::gemm_nn(batch_, d_, d_, h_.data(), uz_.data(), z_.data(), false);
    kernels::gemm_nn(batch_, d_, d_, h_.data(), ur_.data(), r_.data(), false);
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t j = 0; j < d_; ++j) {
        const std::size_t i = b * d_ + j;
        z_[i] = sigmoid(z_[i] + x[b] * wz_[j] + bz_[j]);
        r_[i] = sigmoid(r_[i] + x[b] * wr_[j] + br_[j]);
        rh_[i] = r_[i] * h_[i];
      }
    }
    kernels::gemm_nn(batch_, d_, d_, rh_.data(), uh_.data(), c_.data(), false);
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t j = 0; j < d_; ++j) {
        const std::size_t i = b * d_ + j;
        const double cand = std::tanh(c_[i] + x[b] * wh_[j] + bh_[j]);
        h_[i] = z_[i] * h_[i] + (1.0 - z_[i]) * cand;
      }
    }
  }

 private:
  std::size_t d_, batch_;
  std::vector<double> wz_, wr_, wh_, uz_, ur_, uh_, bz_, br_, bh_;
  std::vector<double> h_, z_, r_, rh_, c_;
};

// Steps per timed call; a single step is too short to time reliably.
constexpr std::size_t kBlock = 8;
constexpr std::size_t kWarmup = 3, kReps = 11;

// One (encoder, H, n) cell with its own state already advanced to n.
struct Probe {
  LatencyRow row;
  std::function<void()> step;
  std::vector<double> samples;
};

// Cells are timed round-robin so slow phases of a shared machine hit every
// cell alike instead of biasing whichever cell ran during them.
void time_interleaved(std::vector<Probe>& probes) {
  for (std::size_t rep = 0; rep < kWarmup + kReps; ++rep) {
    for (Probe& p : probes) {
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < kBlock; ++i) p.step();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (rep >= kWarmup) p.samples.push_back(secs / kBlock);
    }
  }
  for (Probe& p : probes) {
    std::sort(p.samples.begin(), p.samples.end());
    p.row.step = {p.samples[kReps / 2], p.samples.front(), p.samples.back()};
  }
}

}  // namespace

TimingStats time_call(const std::function<void()>& fn, std::size_t warmup, std::size_t reps) {
  if (reps == 0) throw DimensionError("time_call: reps must be positive");
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> samples(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    samples[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  std::sort(samples.begin(), samples.end());
  return {samples[reps / 2], samples.front(), samples.back()};
}

std::vector<LatencyRow> incremental_latency(std::size_t d, std::span<const std::size_t> heads,
                                            std::span<const std::size_t> lengths, std::size_t batch,
                                            std::uint64_t seed, bool include_gru) {
  if (!std::is_sorted(lengths.begin(), lengths.end())) throw DimensionError("incremental_latency: lengths must ascend");
  std::mt19937_64 rng(seed);
  // A pool of inputs cycled through so input generation stays out of the timing.
  constexpr std::size_t kPool = 16;
  std::vector<std::vector<double>> inputs;
  for (std::size_t i = 0; i < kPool; ++i) inputs.push_back(random_values(batch * d, rng));

  // States live in stable storage; each probe's step closure refers to one.
  std::vector<std::unique_ptr<MultiheadState>> lru_states;
  std::vector<std::unique_ptr<GruState>> gru_states;
  std::deque<std::vector<double>> outputs;
  std::vector<BranchLruParams> lru_params;
  for (std::size_t h : heads) lru_params.push_back(init_branch(d, h, rng));
  const GruCellParams gru_params = init_gru(d, rng);

  std::vector<Probe> probes;
  std::size_t tick = 0;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    for (std::size_t n : lengths) {
      auto& state = lru_states.emplace_back(std::make_unique<MultiheadState>(lru_params[i], batch));
      auto& out = outputs.emplace_back(batch * d);
      auto step = [&inputs, &tick, s = state.get(), o = &out] { s->step_into(inputs[tick++ % kPool], *o); };
      for (std::size_t k = 0; k < n; ++k) step();
      probes.push_back({{"lru", d, heads[i], batch, n, {}}, step, {}});
    }
  }
  if (include_gru) {
    for (std::size_t n : lengths) {
      auto& state = gru_states.emplace_back(std::make_unique<GruState>(gru_params, batch));
      auto step = [&inputs, &tick, batch, s = state.get()] {
        s->step(std::span<const double>(inputs[tick++ % kPool]).first(batch));
      };
      for (std::size_t k = 0; k < n; ++k) step();
      probes.push_back({{"gru", d, 0, batch, n, {}}, step, {}});
    }
  }
  time_interleaved(probes);
  std::vector<LatencyRow> rows;
  for (const Probe& p : probes) rows.push_back(p.row);
  return rows;
}

TrainStepRow training_step(std::size_t d, std::size_t H, std::size_t n, std::size_t batch, LruMode mode,
                           std::uint64_t seed, std::size_t warmup, std::size_t reps) {
  std::mt19937_64 rng(seed);
  const BranchLruParams params = init_branch(d, H, rng);
  std::vector<Tensor> xs;
  for (std::size_t b = 0; b < batch; ++b) xs.push_back(Tensor::constant({n, d}, random_values(n * d, rng)));
  const LruOptions options{mode, true};

  TrainStepRow row{d, H, batch, n, mode, {}, {}};
  row.forward = time_call(
      [&] {
        for (const Tensor& x : xs) encode_branch(x, params, options);
      },
      warmup, reps);
  row.forward_backward = time_call(
      [&] {
        Tape tape;
        std::vector<Tensor> outs;
        for (const Tensor& x : xs) outs.push_back(ops::sum(encode_branch(x, params, options)));
        Tensor total = outs.front();
        for (std::size_t i = 1; i < outs.size(); ++i) total = ops::add(total, outs[i]);
        tape.backward(total);
        for (const auto& head : params.heads)
          for (Tensor t : head.tensors()) t.zero_grad();
      },
      warmup, reps);
  return row;
}

void write_latency_csv(std::ostream& out, std::span<const LatencyRow> rows, std::uint64_t seed) {
  out << "encoder,d,H,batch,n,median_seconds,min_seconds,max_seconds,seed\n";
  out.precision(9);
  for (const auto& r : rows) {
    out << r.encoder << ',' << r.d << ',' << r.H << ',' << r.batch << ',' << r.n << ',' << r.step.median << ','
        << r.step.min << ',' << r.step.max << ',' << seed << '\n';
  }
}

void write_train_step_csv(std::ostream& out, std::span<const TrainStepRow> rows, std::uint64_t seed) {
  out << "d,H,batch,n,mode,forward_median_seconds,forward_backward_median_seconds,seed\n";
  out.precision(9);
  for (const auto& r : rows) {
    out << r.d << ',' << r.H << ',' << r.batch << ',' << r.n << ',' << to_string(r.mode) << ',' << r.forward.median
        << ',' << r.forward_backward.median << ',' << seed << '\n';
  }
}

}  // namespace tmepsr

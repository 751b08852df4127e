#pragma once

// Timing harness for incremental inference and training of the sequence
// encoders. All times are seconds from a monotonic clock.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tmepsr/multihead_lru.hpp"

namespace tmepsr {

struct TimingStats {
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// `warmup` untimed calls, then the median of `reps` timed calls.
TimingStats time_call(const std::function<void()>& fn, std::size_t warmup = 3, std::size_t reps = 11);

struct LatencyRow {
  std::string encoder;  // "lru" or "gru"
  std::size_t d = 0;
  std::size_t H = 0;  // 0 for the GRU baseline
  std::size_t batch = 0;
  std::size_t n = 0;  // history length before the timed step
  TimingStats step;
};

// Advances a batch of random sequences to each length in `lengths` (ascending)
// and times further steps there. Every (encoder, H, n) cell keeps its own state
// and the cells are timed in interleaved rounds. The LRU step cost does not
// depend on n.
std::vector<LatencyRow> incremental_latency(std::size_t d, std::span<const std::size_t> heads,
                                            std::span<const std::size_t> lengths, std::size_t batch,
                                            std::uint64_t seed, bool include_gru = true);

struct TrainStepRow {
  std::size_t d = 0;
  std::size_t H = 0;
  std::size_t batch = 0;
  std::size_t n = 0;
  LruMode mode = LruMode::scan;
  TimingStats forward;           // full-sequence encode only
  TimingStats forward_backward;  // encode, sum, backward
};

// One branch over `batch` random sequences of length n.
TrainStepRow training_step(std::size_t d, std::size_t H, std::size_t n, std::size_t batch, LruMode mode,
                           std::uint64_t seed, std::size_t warmup = 3, std::size_t reps = 11);

void write_latency_csv(std::ostream& out, std::span<const LatencyRow> rows, std::uint64_t seed);
void write_train_step_csv(std::ostream& out, std::span<const TrainStepRow> rows, std::uint64_t seed);

}  // namespace tmepsr

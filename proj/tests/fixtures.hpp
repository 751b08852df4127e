#pragma once

// Small hand-built inputs shared by the model-level tests.

#include <random>
#include <vector>

#include "tmepsr/dataset.hpp"
#include "tmepsr/model.hpp"
#include "tmepsr/synthetic.hpp"

namespace fixture {

inline tmepsr::InteractionSequence random_sequence(std::size_t n, std::size_t items, std::size_t expls,
                                                   std::mt19937_64& rng, std::size_t user = 0) {
  tmepsr::InteractionSequence s;
  s.user_index = user;
  std::int64_t t = 1'600'000'000 + static_cast<std::int64_t>(rng() % 100000);
  for (std::size_t i = 0; i < n; ++i) {
    s.items.push_back(rng() % items);
    s.expls.push_back(rng() % expls);
    t += static_cast<std::int64_t>(rng() % 200000);
    s.times.push_back(t);
  }
  return s;
}

// Single batch holding the given sequences in order.
inline tmepsr::Batch batch_of(const std::vector<tmepsr::InteractionSequence>& seqs) {
  tmepsr::Batch b;
  b.batch_size = seqs.size();
  for (const auto& s : seqs) b.max_length = std::max(b.max_length, s.length());
  const std::size_t cells = b.batch_size * b.max_length;
  b.items.assign(cells, 0);
  b.expls.assign(cells, 0);
  b.times.assign(cells, 0);
  b.mask.assign(cells, false);
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    b.users.push_back(seqs[r].user_index);
    b.lengths.push_back(seqs[r].length());
    for (std::size_t j = 0; j < seqs[r].length(); ++j) {
      b.items[b.cell(r, j)] = seqs[r].items[j];
      b.expls[b.cell(r, j)] = seqs[r].expls[j];
      b.times[b.cell(r, j)] = seqs[r].times[j];
      b.mask[b.cell(r, j)] = true;
    }
  }
  return b;
}

// Replaces every parameter value with N(0, scale²) so no gradient is trivially small.
inline void randomize(tmepsr::ModelParams& params, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> dist(0.0, scale);
  params.visit([&](const std::string&, tmepsr::Tensor& t) {
    for (double& v : t.mutable_data()) v = dist(rng);
  });
}

inline tmepsr::ExperimentConfig tiny_config() {
  tmepsr::ExperimentConfig c;
  c.d = 4;
  c.H = 2;
  c.epochs = 3;
  c.batch_size = 8;
  c.learning_rate = 0.01;
  return c;
}

inline tmepsr::Corpus small_synthetic_corpus(std::size_t users = 40, std::uint64_t seed = 3) {
  tmepsr::SyntheticSpec spec;
  spec.user_count = users;
  spec.item_count = 30;
  spec.expl_count = 20;
  spec.min_length = 6;
  spec.max_length = 10;
  spec.seed = seed;
  return tmepsr::build_corpus(tmepsr::generate_synthetic(spec).interactions);
}

// Two users, |V|=6, |E|=5, d=4, H=2, n=4. Gaps of 1-3 s keep the GRU gates out
// of saturation and N(0, 0.7²) parameters keep gradients well above the
// central-difference roundoff floor (about ulp(loss)/2ε ≈ 2e-11).
struct GradInstance {
  tmepsr::ExperimentConfig config;
  tmepsr::ModelParams params;
  tmepsr::Batch batch;
};

inline GradInstance grad_instance(std::uint64_t seed, tmepsr::MiMode mode = tmepsr::MiMode::dynamic_dual) {
  std::mt19937_64 rng(seed);
  GradInstance g;
  g.config = tiny_config();
  g.config.beta = 1.0;
  g.config.mi_mode = mode;
  g.params = tmepsr::init_model(6, 5, g.config, rng);
  randomize(g.params, rng, 0.7);
  std::vector<tmepsr::InteractionSequence> seqs;
  for (std::size_t u = 0; u < 2; ++u) {
    auto s = random_sequence(4, 6, 5, rng, u);
    std::int64_t t = 1000;
    for (auto& x : s.times) x = t += 1 + static_cast<std::int64_t>(rng() % 3);
    seqs.push_back(s);
  }
  g.batch = batch_of(seqs);
  return g;
}

}  // namespace fixture

#pragma once

// Experiment configuration: a flat set of typed keys with defaults, read from
// `key = value` files (TOML-style scalars) and overridden by CLI flags.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tmepsr/alignment_mi.hpp"
#include "tmepsr/multihead_lru.hpp"
#include "tmepsr/time_encoder.hpp"

namespace tmepsr {

enum class MiCandidates { full, sampled };
std::string to_string(MiCandidates c);
MiCandidates parse_mi_candidates(const std::string& name);

struct ExperimentConfig {
  double alpha = 0.9;
  double beta = 0.1;
  std::size_t d = 50;
  std::size_t H = 2;
  std::size_t max_len = 50;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 42;

  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double dropout = 0.0;

  TimeStrategy time_strategy = TimeStrategy::gated;
  MiMode mi_mode = MiMode::dynamic_dual;
  LruMode lru_mode = LruMode::scan;
  bool lru_normalize = true;
  MiCandidates mi_candidates = MiCandidates::full;
  std::size_t mi_negatives = 100;

  bool time_aware = true;
  bool multi_interest = true;
  bool explanation_personalization = true;

  std::size_t eval_k = 10;
  bool mask_seen = false;

  // Toggles folded into the component settings: time-aware off ⇒ strategy
  // disabled, multi-interest off ⇒ one head, explanation off ⇒ MI disabled.
  ExperimentConfig effective() const;
  void validate() const;

  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  // Canonical `key = value` lines, sorted by key.
  std::string to_text() const;
  // 16 hex digits, stable across runs for equal configs.
  std::string hash() const;

  static const std::vector<std::string>& keys();
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// FNV-1a 64-bit, hex encoded.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace tmepsr

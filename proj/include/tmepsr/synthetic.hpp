#pragma once

// Synthetic interaction logs with planted structure.
//
// Items and explanations are partitioned into interest clusters; every cluster
// is split into two halves ("sub-interests"). Each user prefers one or two
// clusters and belongs to a rhythm group and an alignment profile:
//  - bursty rhythm groups alternate short and long gaps, and the half used by
//    the next interaction follows the length of the latest gap;
//  - regular rhythm groups have unimodal jittered gaps, and the half drifts from
//    the first to the second once enough absolute time has elapsed;
//  - balanced users pair every item with its canonical explanation,
//    rec_dominant users replace most explanations with noise, and
//    exp_dominant users replace most items with noise while the explanation
//    keeps following the planted item.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tmepsr/dataset.hpp"

namespace tmepsr {

enum class AlignmentProfile { balanced, rec_dominant, exp_dominant };
std::string to_string(AlignmentProfile p);

struct RhythmProfile {
  double mean_gap = 3600.0;  // seconds
  bool bursty = true;
};

struct SyntheticSpec {
  std::size_t user_count = 500;
  std::size_t item_count = 300;
  std::size_t expl_count = 200;
  std::size_t cluster_count = 3;
  std::size_t min_length = 8;
  std::size_t max_length = 20;
  std::vector<RhythmProfile> rhythms = {{3600.0, true}, {30.0 * 86400.0, false}};
  // Rhythm group = primary cluster mod group count; otherwise drawn at random.
  bool rhythm_follows_cluster = true;
  bool alignment_profiles = true;
  // Profile = primary cluster mod 3; otherwise drawn at random.
  bool profile_follows_cluster = false;
  double noise = 0.7;                // replacement probability for the noisy side of a profile
  double second_cluster_prob = 0.5;  // chance that a user has a second interest cluster
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticUser {
  std::string user_id;
  std::size_t primary_cluster = 0;
  std::vector<double> cluster_probs;  // expected item-cluster distribution including noise
  std::size_t rhythm_group = 0;
  AlignmentProfile profile = AlignmentProfile::balanced;
};

struct SyntheticCorpus {
  std::vector<Interaction> interactions;
  std::vector<SyntheticUser> users;
  std::vector<std::size_t> item_cluster;  // by generator item number
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// Generator item id "i<number>" back to its number.
std::size_t synthetic_item_number(const std::string& item_id);

void write_labels_csv(std::ostream& out, const SyntheticCorpus& corpus);

}  // namespace tmepsr

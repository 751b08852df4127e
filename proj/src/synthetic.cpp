#include "tmepsr/synthetic.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "tmepsr/errors.hpp"

namespace tmepsr {

namespace {

struct Range {
  std::size_t begin = 0, end = 0;
  std::size_t size() const { return end - begin; }
};

Range part(std::size_t total, std::size_t parts, std::size_t index) {
  const std::size_t base = total / parts;
  const std::size_t begin = index * base;
  return {begin, index + 1 == parts ? total : begin + base};
}

// Skewed popularity inside a half-cluster so that the planted structure is learnable.
std::size_t draw_popular(Range r, std::mt19937_64& rng) {
  std::vector<double> w(r.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / std::pow(static_cast<double>(i) + 1.0, 0.8);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return r.begin + pick(rng);
}

}  // namespace

std::string to_string(AlignmentProfile p) {
  switch (p) {
    case AlignmentProfile::balanced: return "balanced";
    case AlignmentProfile::rec_dominant: return "rec_dominant";
    case AlignmentProfile::exp_dominant: return "exp_dominant";
  }
  return "?";
}

void SyntheticSpec::validate() const {
  if (cluster_count == 0) throw ConfigError("synthetic: cluster_count must be positive");
  if (item_count < 2 * cluster_count || expl_count < cluster_count) {
    throw ConfigError("synthetic: need at least two items and one explanation per cluster");
  }
  if (user_count == 0) throw ConfigError("synthetic: user_count must be positive");
  if (min_length < 3 || max_length < min_length) throw ConfigError("synthetic: need 3 <= min_length <= max_length");
  if (rhythms.empty()) throw ConfigError("synthetic: at least one rhythm profile");
  for (const auto& r : rhythms)
    if (!(r.mean_gap >= 1.0)) throw ConfigError("synthetic: mean gap must be at least one second");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synthetic: noise must lie in [0,1]");
}

std::size_t synthetic_item_number(const std::string& item_id) {
  if (item_id.size() < 2 || item_id.front() != 'i') throw DataError("not a synthetic item id: " + item_id);
  return std::stoul(item_id.substr(1));
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t C = spec.cluster_count;

  SyntheticCorpus out;
  out.item_cluster.resize(spec.item_count);
  std::vector<Range> item_ranges, expl_ranges;
  for (std::size_t c = 0; c < C; ++c) {
    item_ranges.push_back(part(spec.item_count, C, c));
    expl_ranges.push_back(part(spec.expl_count, C, c));
    for (std::size_t i = item_ranges[c].begin; i < item_ranges[c].end; ++i) out.item_cluster[i] = c;
  }
  auto canonical_expl = [&](std::size_t item) {
    const std::size_t c = out.item_cluster[item];
    return expl_ranges[c].begin + (item - item_ranges[c].begin) % expl_ranges[c].size();
  };
  const double mean_length = 0.5 * static_cast<double>(spec.min_length + spec.max_length);

  for (std::size_t u = 0; u < spec.user_count; ++u) {
    SyntheticUser user;
    user.user_id = "u" + std::to_string(u);
    user.primary_cluster = std::uniform_int_distribution<std::size_t>(0, C - 1)(rng);
    std::vector<double> weights(C, 0.0);
    weights[user.primary_cluster] = 1.0;
    if (C > 1 && unit(rng) < spec.second_cluster_prob) {
      std::size_t second = std::uniform_int_distribution<std::size_t>(0, C - 2)(rng);
      if (second >= user.primary_cluster) ++second;
      weights[user.primary_cluster] = 0.7;
      weights[second] = 0.3;
    }
    user.rhythm_group = spec.rhythm_follows_cluster
                            ? user.primary_cluster % spec.rhythms.size()
                            : std::uniform_int_distribution<std::size_t>(0, spec.rhythms.size() - 1)(rng);
    if (spec.alignment_profiles) {
      const std::size_t p = spec.profile_follows_cluster ? user.primary_cluster % 3
                                                         : std::uniform_int_distribution<std::size_t>(0, 2)(rng);
      user.profile = static_cast<AlignmentProfile>(p);
    }
    const bool noisy_items = user.profile == AlignmentProfile::exp_dominant;
    user.cluster_probs.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
      const double uniform_share = static_cast<double>(item_ranges[c].size()) / static_cast<double>(spec.item_count);
      user.cluster_probs[c] = noisy_items ? (1.0 - spec.noise) * weights[c] + spec.noise * uniform_share : weights[c];
    }

    const RhythmProfile& rhythm = spec.rhythms[user.rhythm_group];
    const double drift_after = rhythm.mean_gap * mean_length / 2.0;
    const std::size_t n = std::uniform_int_distribution<std::size_t>(spec.min_length, spec.max_length)(rng);
    std::discrete_distribution<std::size_t> pick_cluster(weights.begin(), weights.end());
    std::int64_t t0 = 1600000000 + static_cast<std::int64_t>(unit(rng) * 1e7);
    std::int64_t t = t0;
    std::int64_t last_gap = -1;
    for (std::size_t i = 0; i < n; ++i) {
      std::int64_t gap = 0;
      if (i > 0) {
        double g;
        if (rhythm.bursty) {
          const double factor = unit(rng) < 0.5 ? 0.2 : 1.8;
          g = rhythm.mean_gap * factor * (0.5 + unit(rng));
        } else {
          // Wide jitter keeps elapsed time from being a proxy for position.
          g = rhythm.mean_gap * (0.5 + unit(rng));
        }
        gap = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(g)));
      }
      // The half is decided by what is known at the previous step.
      std::size_t half;
      if (rhythm.bursty) {
        half = last_gap < 0 ? (unit(rng) < 0.5 ? 0 : 1) : (static_cast<double>(last_gap) < rhythm.mean_gap ? 0 : 1);
      } else {
        half = static_cast<double>(t - t0) < drift_after ? 0 : 1;
      }
      t += gap;
      if (i > 0) last_gap = gap;

      const std::size_t c = pick_cluster(rng);
      const Range r = item_ranges[c];
      const std::size_t mid = r.begin + r.size() / 2;
      const std::size_t planted = draw_popular(half == 0 ? Range{r.begin, mid} : Range{mid, r.end}, rng);
      std::size_t item = planted;
      std::size_t expl = canonical_expl(planted);
      if (user.profile == AlignmentProfile::rec_dominant && unit(rng) < spec.noise) {
        expl = std::uniform_int_distribution<std::size_t>(0, spec.expl_count - 1)(rng);
      } else if (noisy_items && unit(rng) < spec.noise) {
        item = std::uniform_int_distribution<std::size_t>(0, spec.item_count - 1)(rng);
      }
      out.interactions.push_back({user.user_id, "i" + std::to_string(item), "e" + std::to_string(expl), t});
    }
    out.users.push_back(std::move(user));
  }
  return out;
}

void write_labels_csv(std::ostream& out, const SyntheticCorpus& corpus) {
  out << "user_id,primary_cluster,rhythm_group,profile\n";
  for (const auto& u : corpus.users) {
    out << u.user_id << ',' << u.primary_cluster << ',' << u.rhythm_group << ',' << to_string(u.profile) << '\n';
  }
}

}  // namespace tmepsr

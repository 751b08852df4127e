#pragma once

// Post-training analyses and experiment grids: gate-vs-interval regression,
// MI-weight clustering, ablations and strategy/head sweeps.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmepsr/config.hpp"
#include "tmepsr/dataset.hpp"
#include "tmepsr/metrics.hpp"
#include "tmepsr/model.hpp"

namespace tmepsr {

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
  bool degenerate = false;  // zero variance in x or y; r reported as 0
};

RegressionFit fit_line(std::span<const double> x, std::span<const double> y);

struct GammaPoint {
  std::string user_id;
  double mean_gap = 0.0;  // seconds
  double gamma_rec = 0.0;
  double gamma_exp = 0.0;
};

struct GammaAnalysis {
  std::vector<GammaPoint> points;
  RegressionFit fit_rec;
  RegressionFit fit_exp;
};

// One point per user from the full known history (train + validation).
GammaAnalysis gamma_interval_analysis(const ModelParams& params, const ExperimentConfig& config, const Corpus& corpus,
                                      std::span<const SplitSequence> splits);

struct MuPoint {
  std::string user_id;
  double mu_rec = 0.0;
  double mu_exp = 0.0;
};
std::vector<MuPoint> mu_points(const ModelParams& params, const ExperimentConfig& config, const Corpus& corpus,
                               std::span<const SplitSequence> splits);

using Point2 = std::pair<double, double>;

// Each coordinate rescaled to [0,1]; constant coordinates map to 0.
std::vector<Point2> minmax_normalize(std::span<const Point2> points);

struct ClusterResult {
  std::vector<Point2> centroids;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // per Lloyd iteration of the kept restart
  std::size_t iterations = 0;
};

// k-means++ seeding and Lloyd iterations until every centroid moves less than
// 1e-9 or 300 iterations; the restart with the lowest inertia is kept.
ClusterResult kmeans(std::span<const Point2> points, std::size_t k, std::uint64_t seed, std::size_t restarts = 10);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

struct RunMetrics {
  EvalResult rec;
  EvalResult exp;
};

// Trains on `corpus` with `config` and scores the test interactions.
RunMetrics train_and_test(const Corpus& corpus, const ExperimentConfig& config);

struct GridRow {
  std::string label;
  ExperimentConfig config;
  RunMetrics metrics;
};

// 2³ toggle combinations, backbone (all off) first and full model last.
std::vector<GridRow> ablation_grid(const Corpus& corpus, const ExperimentConfig& base);
// abs_only, adj_only, equal, gated.
std::vector<GridRow> gating_strategy_sweep(const Corpus& corpus, const ExperimentConfig& base);
// fixed, single_shared, dynamic_dual.
std::vector<GridRow> mi_strategy_sweep(const Corpus& corpus, const ExperimentConfig& base);

struct HeadSweepRow {
  std::size_t d = 0;
  std::size_t H = 0;
  ParamCount params;
  RunMetrics metrics;
};
std::vector<std::size_t> divisors(std::size_t d);
// Trains every (d, H) with H a divisor of d, or the listed head counts when given.
std::vector<HeadSweepRow> head_sweep(const Corpus& corpus, const ExperimentConfig& base, std::span<const std::size_t> ds,
                                     std::span<const std::size_t> heads = {});

// Trains the listed configurations as independent jobs, in parallel when threads allow.
std::vector<RunMetrics> run_grid(const Corpus& corpus, std::span<const ExperimentConfig> configs);

void write_grid_csv(std::ostream& out, std::span<const GridRow> rows);
void write_head_sweep_csv(std::ostream& out, std::span<const HeadSweepRow> rows, const std::string& config_hash,
                          std::uint64_t seed);
void write_gamma_csv(std::ostream& out, const GammaAnalysis& analysis, const std::string& config_hash,
                     std::uint64_t seed);
void write_mu_csv(std::ostream& out, std::span<const MuPoint> points, const ClusterResult& clusters,
                  const std::string& config_hash, std::uint64_t seed);

}  // namespace tmepsr

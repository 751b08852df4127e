#include "tmepsr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include "tmepsr/errors.hpp"
#include "tmepsr/train.hpp"

namespace tmepsr {

namespace {

double sq_dist(const Point2& a, const Point2& b) {
  const double dx = a.first - b.first, dy = a.second - b.second;
  return dx * dx + dy * dy;
}

std::size_t nearest(const Point2& p, const std::vector<Point2>& centroids) {
  std::size_t best = 0;
  double best_d = sq_dist(p, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double assign(std::span<const Point2> points, const std::vector<Point2>& centroids, std::vector<std::size_t>& out) {
  double inertia = 0.0;
  out.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = nearest(points[i], centroids);
    inertia += sq_dist(points[i], centroids[out[i]]);
  }
  return inertia;
}

std::vector<Point2> plus_plus_seeds(std::span<const Point2> points, std::size_t k, std::mt19937_64& rng) {
  std::vector<Point2> centroids;
  centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng)]);
  std::vector<double> d2(points.size());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = sq_dist(points[i], centroids[nearest(points[i], centroids)]);
      total += d2[i];
    }
    if (total == 0.0) throw DimensionError("kmeans: fewer distinct points than clusters");
    std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
    centroids.push_back(points[pick(rng)]);
  }
  return centroids;
}

ClusterResult lloyd(std::span<const Point2> points, std::vector<Point2> centroids) {
  constexpr double kTolerance = 1e-9;
  constexpr std::size_t kMaxIterations = 300;
  ClusterResult r;
  const std::size_t k = centroids.size();
  for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
    r.inertia_trace.push_back(assign(points, centroids, r.assignments));
    ++r.iterations;
    std::vector<Point2> sums(k, {0.0, 0.0});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[r.assignments[i]].first += points[i].first;
      sums[r.assignments[i]].second += points[i].second;
      ++counts[r.assignments[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      const Point2 next{sums[c].first / double(counts[c]), sums[c].second / double(counts[c])};
      shift = std::max(shift, std::sqrt(sq_dist(next, centroids[c])));
      centroids[c] = next;
    }
    if (shift < kTolerance) break;
  }
  r.inertia = assign(points, centroids, r.assignments);
  r.inertia_trace.push_back(r.inertia);
  r.centroids = std::move(centroids);
  return r;
}

std::string grid_label(const ExperimentConfig& c) {
  if (!c.time_aware && !c.multi_interest && !c.explanation_personalization) return "backbone";
  if (c.time_aware && c.multi_interest && c.explanation_personalization) return "full";
  std::string label;
  auto add = [&](const char* part) { label += (label.empty() ? "" : "+") + std::string(part); };
  if (c.time_aware) add("time");
  if (c.multi_interest) add("multi_interest");
  if (c.explanation_personalization) add("explanation");
  return label;
}

std::vector<GridRow> rows_for(const Corpus& corpus, std::vector<GridRow> rows) {
  std::vector<ExperimentConfig> configs;
  for (const auto& r : rows) configs.push_back(r.config);
  const auto metrics = run_grid(corpus, configs);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].metrics = metrics[i];
  return rows;
}

InteractionSequence known_history(const SplitSequence& s, std::size_t max_len) {
  return truncate_recent(s.train_and_valid(), max_len);
}

}  // namespace

RegressionFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("fit_line: need at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  // Constancy is tested exactly: the rounded mean can leave a tiny nonzero spread.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  RegressionFit fit;
  if (sxx == 0.0 || constant(x)) {
    fit.degenerate = true;
    fit.intercept = my;
    return fit;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy == 0.0 || constant(y)) {
    fit.slope = 0.0;
    fit.intercept = my;
    fit.degenerate = true;
    return fit;
  }
  fit.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return fit;
}

GammaAnalysis gamma_interval_analysis(const ModelParams& params, const ExperimentConfig& config, const Corpus& corpus,
                                      std::span<const SplitSequence> splits) {
  const ExperimentConfig cfg = config.effective();
  if (cfg.time_strategy != TimeStrategy::gated) throw ConfigError("gamma analysis needs time_strategy=gated");
  if (splits.size() < 3) throw DimensionError("gamma analysis needs at least 3 users");
  GammaAnalysis a;
  std::vector<double> x, yr, ye;
  for (const auto& s : splits) {
    const SequenceDiagnostics d = diagnose(params, cfg, known_history(s, cfg.max_len));
    a.points.push_back({corpus.user_ids.at(s.train.user_index), d.mean_gap, d.gamma_rec, d.gamma_exp});
    x.push_back(d.mean_gap);
    yr.push_back(d.gamma_rec);
    ye.push_back(d.gamma_exp);
  }
  a.fit_rec = fit_line(x, yr);
  a.fit_exp = fit_line(x, ye);
  return a;
}

std::vector<MuPoint> mu_points(const ModelParams& params, const ExperimentConfig& config, const Corpus& corpus,
                               std::span<const SplitSequence> splits) {
  const ExperimentConfig cfg = config.effective();
  std::vector<MuPoint> out;
  for (const auto& s : splits) {
    const SequenceDiagnostics d = diagnose(params, cfg, known_history(s, cfg.max_len));
    out.push_back({corpus.user_ids.at(s.train.user_index), d.mu_rec, d.mu_exp});
  }
  return out;
}

std::vector<Point2> minmax_normalize(std::span<const Point2> points) {
  if (points.empty()) return {};
  double lx = points[0].first, hx = lx, ly = points[0].second, hy = ly;
  for (const auto& p : points) {
    lx = std::min(lx, p.first);
    hx = std::max(hx, p.first);
    ly = std::min(ly, p.second);
    hy = std::max(hy, p.second);
  }
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    out.emplace_back(hx > lx ? (p.first - lx) / (hx - lx) : 0.0, hy > ly ? (p.second - ly) / (hy - ly) : 0.0);
  }
  return out;
}

ClusterResult kmeans(std::span<const Point2> points, std::size_t k, std::uint64_t seed, std::size_t restarts) {
  if (k == 0) throw DimensionError("kmeans: k must be positive");
  if (points.size() < k) throw DimensionError("kmeans: fewer points than clusters");
  const std::set<Point2> distinct(points.begin(), points.end());
  if (distinct.size() < k) throw DimensionError("kmeans: fewer distinct points than clusters");
  std::mt19937_64 rng(seed);
  ClusterResult best;
  for (std::size_t run = 0; run < std::max<std::size_t>(1, restarts); ++run) {
    ClusterResult r = lloyd(points, plus_plus_seeds(points, k, rng));
    if (run == 0 || r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("adjusted_rand_index: label lists differ in length");
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double n) { return n * (n - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, n] : table) index += pairs(n);
  for (const auto& [key, n] : rows) sum_rows += pairs(n);
  for (const auto& [key, n] : cols) sum_cols += pairs(n);
  const double total = pairs(static_cast<double>(a.size()));
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

RunMetrics train_and_test(const Corpus& corpus, const ExperimentConfig& config) {
  const TrainResult trained = train(corpus, config);
  const auto [rec, exp] = evaluate(trained.params, config, trained.splits, EvalTarget::test, config.eval_k);
  return {rec, exp};
}

std::vector<RunMetrics> run_grid(const Corpus& corpus, std::span<const ExperimentConfig> configs) {
  std::vector<RunMetrics> out(configs.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < configs.size(); ++i) {
    try {
      out[i] = train_and_test(corpus, configs[i]);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<GridRow> ablation_grid(const Corpus& corpus, const ExperimentConfig& base) {
  std::vector<GridRow> rows;
  for (unsigned mask = 0; mask < 8; ++mask) {
    ExperimentConfig c = base;
    c.time_aware = mask & 1u;
    c.multi_interest = mask & 2u;
    c.explanation_personalization = mask & 4u;
    rows.push_back({grid_label(c), c, {}});
  }
  return rows_for(corpus, std::move(rows));
}

std::vector<GridRow> gating_strategy_sweep(const Corpus& corpus, const ExperimentConfig& base) {
  std::vector<GridRow> rows;
  for (auto s : {TimeStrategy::abs_only, TimeStrategy::adj_only, TimeStrategy::equal, TimeStrategy::gated}) {
    ExperimentConfig c = base;
    c.time_aware = true;
    c.time_strategy = s;
    rows.push_back({to_string(s), c, {}});
  }
  return rows_for(corpus, std::move(rows));
}

std::vector<GridRow> mi_strategy_sweep(const Corpus& corpus, const ExperimentConfig& base) {
  std::vector<GridRow> rows;
  for (auto m : {MiMode::fixed, MiMode::single_shared, MiMode::dynamic_dual}) {
    ExperimentConfig c = base;
    c.explanation_personalization = true;
    c.mi_mode = m;
    rows.push_back({to_string(m), c, {}});
  }
  return rows_for(corpus, std::move(rows));
}

std::vector<std::size_t> divisors(std::size_t d) {
  std::vector<std::size_t> out;
  for (std::size_t h = 1; h <= d; ++h)
    if (d % h == 0) out.push_back(h);
  return out;
}

std::vector<HeadSweepRow> head_sweep(const Corpus& corpus, const ExperimentConfig& base, std::span<const std::size_t> ds,
                                     std::span<const std::size_t> heads) {
  std::vector<HeadSweepRow> rows;
  std::vector<ExperimentConfig> configs;
  for (std::size_t d : ds) {
    const std::vector<std::size_t> hs = heads.empty() ? divisors(d) : std::vector<std::size_t>(heads.begin(), heads.end());
    for (std::size_t h : hs) {
      if (h == 0 || d % h != 0) continue;
      ExperimentConfig c = base;
      c.d = d;
      c.H = h;
      c.multi_interest = true;
      configs.push_back(c);
      rows.push_back({d, h, param_count(d, h), {}});
    }
  }
  const auto metrics = run_grid(corpus, configs);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].metrics = metrics[i];
  return rows;
}

void write_grid_csv(std::ostream& out, std::span<const GridRow> rows) {
  out << "label,time_aware,multi_interest,explanation_personalization,time_strategy,mi_mode,H,"
         "rec_recall,rec_ndcg,exp_recall,exp_ndcg,k,users,config_hash,seed\n";
  out.precision(17);
  for (const auto& r : rows) {
    const ExperimentConfig e = r.config.effective();
    out << r.label << ',' << r.config.time_aware << ',' << r.config.multi_interest << ','
        << r.config.explanation_personalization << ',' << to_string(e.time_strategy) << ',' << to_string(e.mi_mode)
        << ',' << e.H << ',' << r.metrics.rec.recall << ',' << r.metrics.rec.ndcg << ',' << r.metrics.exp.recall << ','
        << r.metrics.exp.ndcg << ',' << r.metrics.rec.k << ',' << r.metrics.rec.user_count << ',' << r.config.hash()
        << ',' << r.config.seed << '\n';
  }
}

void write_head_sweep_csv(std::ostream& out, std::span<const HeadSweepRow> rows, const std::string& config_hash,
                          std::uint64_t seed) {
  out << "d,H,params_per_branch,params_total,dominant_term,rec_recall,rec_ndcg,exp_recall,exp_ndcg,config_hash,seed\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.d << ',' << r.H << ',' << r.params.per_branch << ',' << r.params.total << ',' << r.params.dominant_term
        << ',' << r.metrics.rec.recall << ',' << r.metrics.rec.ndcg << ',' << r.metrics.exp.recall << ','
        << r.metrics.exp.ndcg << ',' << config_hash << ',' << seed << '\n';
  }
}

void write_gamma_csv(std::ostream& out, const GammaAnalysis& analysis, const std::string& config_hash,
                     std::uint64_t seed) {
  out << "user_id,mean_gap_seconds,gamma_rec,gamma_exp,config_hash,seed\n";
  out.precision(17);
  for (const auto& p : analysis.points) {
    out << p.user_id << ',' << p.mean_gap << ',' << p.gamma_rec << ',' << p.gamma_exp << ',' << config_hash << ','
        << seed << '\n';
  }
}

void write_mu_csv(std::ostream& out, std::span<const MuPoint> points, const ClusterResult& clusters,
                  const std::string& config_hash, std::uint64_t seed) {
  out << "user_id,mu_rec,mu_exp,cluster,config_hash,seed\n";
  out.precision(17);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points[i].user_id << ',' << points[i].mu_rec << ',' << points[i].mu_exp << ','
        << (i < clusters.assignments.size() ? std::to_string(clusters.assignments[i]) : "") << ',' << config_hash
        << ',' << seed << '\n';
  }
}

}  // namespace tmepsr

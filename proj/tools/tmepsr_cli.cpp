// tmepsr: data preparation, training, evaluation, ablations, analyses and
// benchmarks. Config keys are accepted as `--key value` on every command that
// trains or evaluates; `--config FILE` supplies a base `key = value` file.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tmepsr/analysis.hpp"
#include "tmepsr/config.hpp"
#include "tmepsr/dataset.hpp"
#include "tmepsr/efficiency.hpp"
#include "tmepsr/errors.hpp"
#include "tmepsr/kernels.hpp"
#include "tmepsr/metrics.hpp"
#include "tmepsr/model.hpp"
#include "tmepsr/synthetic.hpp"
#include "tmepsr/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tmepsr;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Exactly one manifest per artifact-producing command.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir) : out_dir_(std::move(out_dir)) {
    j_["command"] = std::move(command);
    j_["started_at"] = utc_now();
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
  }
  void config(const ExperimentConfig& c) {
    j_["config"] = c.to_map();
    j_["config_hash"] = c.hash();
    j_["seed"] = c.seed;
  }
  void input(const fs::path& p) { j_["inputs"].push_back({{"path", p.string()}, {"content_hash", file_hash(p)}}); }
  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }
  json& extra() { return j_["results"]; }
  void write() {
    j_["finished_at"] = utc_now();
    const fs::path path = out_dir_ / "manifest.json";
    std::ofstream out(path);
    out << j_.dump(2) << '\n';
    if (!out) throw DataError("cannot write " + path.string());
  }

 private:
  fs::path out_dir_;
  json j_;
};

std::ofstream open_output(const fs::path& path, Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  manifest.output(path);
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

// `--key value` and `--key=value` pairs left over after CLI11 parsing.
ExperimentConfig apply_overrides(ExperimentConfig c, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2), value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("missing value for --" + key);
      value = extras[++i];
    }
    c.set(key, value);
  }
  c.validate();
  return c;
}

ExperimentConfig resolve_config(const std::string& config_file, const std::vector<std::string>& extras) {
  return apply_overrides(config_file.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_file), extras);
}

Corpus load_corpus(const fs::path& input) {
  const auto rows = load_interactions(input);
  return build_corpus(rows);
}

void check_vocab(const Vocabulary& got, const Vocabulary& want, const char* what) {
  if (got.ids() != want.ids()) {
    throw DataError(std::string(what) + " vocabulary of the input differs from the checkpoint");
  }
}

void write_vocab(const fs::path& path, const Vocabulary& v, Manifest& m) {
  auto out = open_output(path, m);
  out << "index\tid\n";
  for (std::size_t i = 0; i < v.size(); ++i) out << i << '\t' << v.id_of(i) << '\n';
}

void write_eval_csv(std::ostream& out, const std::string& dataset, const std::pair<EvalResult, EvalResult>& r,
                    const ExperimentConfig& c) {
  out << "dataset,task,K,recall,ndcg,users,config_hash\n";
  out.precision(17);
  for (const EvalResult& e : {r.first, r.second}) {
    out << dataset << ',' << to_string(e.task) << ',' << e.k << ',' << e.recall << ',' << e.ndcg << ','
        << e.user_count << ',' << c.hash() << '\n';
  }
}

json eval_json(const std::pair<EvalResult, EvalResult>& r) {
  return {{"rec", {{"recall", r.first.recall}, {"ndcg", r.first.ndcg}, {"k", r.first.k}}},
          {"exp", {{"recall", r.second.recall}, {"ndcg", r.second.ndcg}, {"k", r.second.k}}}};
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    try {
      out.push_back(std::stoul(part));
    } catch (const std::exception&) {
      throw UsageError("expected a comma-separated list of integers, got '" + text + "'");
    }
  }
  return out;
}

std::string config_keys_footer() {
  std::string s = "Config keys (pass as --key value):";
  for (const auto& k : ExperimentConfig::keys()) s += " " + k;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  CLI::App app{"Time-aware multi-interest explainable sequential recommendation"};
  app.require_subcommand(1);
  app.footer(config_keys_footer());

  std::string input, out_dir = "out", config_file, checkpoint, grid = "toggles", ds_text = "60,120,240", heads_text,
                     lengths_text = "100,1000,5000", bench_heads = "2,4,6,8";
  std::size_t k = 10, clusters = 3, bench_d = 240, bench_batch = 256, train_n = 256;
  SyntheticSpec spec;

  auto add_common = [&](CLI::App* cmd, bool needs_input) {
    auto* opt = cmd->add_option("--input", input, "interaction TSV");
    if (needs_input) opt->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--config", config_file, "base config file (key = value)");
    cmd->allow_extras();
  };

  auto* prepare = app.add_subcommand("prepare", "parse a TSV log, write vocabularies and a split summary");
  prepare->add_option("--input", input, "interaction TSV")->required();
  prepare->add_option("--out", out_dir, "output directory");

  auto* train_cmd = app.add_subcommand("train", "train a model and score the test interactions");
  add_common(train_cmd, true);

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the test interactions");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  eval_cmd->add_option("--k", k, "cutoff K");

  auto* ablate = app.add_subcommand("ablate", "train a comparison grid");
  add_common(ablate, true);
  ablate->add_option("--grid", grid, "toggles | gating | mi | heads")
      ->check(CLI::IsMember({"toggles", "gating", "mi", "heads"}));
  ablate->add_option("--d-list", ds_text, "embedding sizes for the head grid");
  ablate->add_option("--h-list", heads_text, "head counts for the head grid (default: all divisors)");

  auto* analyze = app.add_subcommand("analyze", "gate/interval regression and MI-weight clustering");
  add_common(analyze, true);
  analyze->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  analyze->add_option("--clusters", clusters, "k for k-means");

  auto* bench = app.add_subcommand("bench", "incremental inference and training timings");
  bench->add_option("--out", out_dir, "output directory");
  bench->add_option("--d", bench_d, "embedding size");
  bench->add_option("--heads", bench_heads, "head counts");
  bench->add_option("--lengths", lengths_text, "history lengths, ascending");
  bench->add_option("--batch", bench_batch, "batch size");
  bench->add_option("--train-n", train_n, "sequence length for the training-step timing");

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with planted structure");
  synth->add_option("--out", out_dir, "output directory");
  synth->add_option("--users", spec.user_count);
  synth->add_option("--items", spec.item_count);
  synth->add_option("--expls", spec.expl_count);
  synth->add_option("--clusters", spec.cluster_count);
  synth->add_option("--min-length", spec.min_length);
  synth->add_option("--max-length", spec.max_length);
  synth->add_option("--noise", spec.noise);
  synth->add_option("--seed", spec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    ensure_dir(out_dir);
    Manifest manifest(name, out_dir);

    if (name == "prepare") {
      manifest.input(input);
      const Corpus corpus = load_corpus(input);
      write_vocab(fs::path(out_dir) / "items.tsv", corpus.items, manifest);
      write_vocab(fs::path(out_dir) / "expls.tsv", corpus.expls, manifest);
      std::size_t interactions = 0;
      for (const auto& s : corpus.sequences) interactions += s.length();
      json summary = {{"users", corpus.sequences.size()},
                      {"dropped_users", corpus.dropped_users},
                      {"items", corpus.items.size()},
                      {"explanations", corpus.expls.size()},
                      {"interactions", interactions},
                      {"train_interactions", interactions - 2 * corpus.sequences.size()},
                      {"validation_interactions", corpus.sequences.size()},
                      {"test_interactions", corpus.sequences.size()}};
      {
        auto out = open_output(fs::path(out_dir) / "split_summary.json", manifest);
        out << summary.dump(2) << '\n';
      }
      manifest.extra() = summary;
      std::cout << "users " << corpus.sequences.size() << " (dropped " << corpus.dropped_users << "), items "
                << corpus.items.size() << ", explanations " << corpus.expls.size() << '\n';
    } else if (name == "train") {
      const ExperimentConfig c = resolve_config(config_file, cmd->remaining());
      manifest.config(c);
      manifest.input(input);
      const Corpus corpus = load_corpus(input);
      TrainOptions opts;
      opts.on_epoch = [](const EpochStats& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.loss << " (rec " << e.l_rec << ", exp " << e.l_exp
                  << ", mi " << e.j_mi << ") valid R@10 " << e.valid_rec.recall << " N@10 " << e.valid_rec.ndcg
                  << ' ' << e.seconds << "s\n";
      };
      const TrainResult result = train(corpus, c, opts);
      const fs::path ckpt = fs::path(out_dir) / "checkpoint.json";
      save_checkpoint(ckpt, {c, result.params, corpus.items, corpus.expls});
      manifest.output(ckpt);
      {
        auto out = open_output(fs::path(out_dir) / "train_report.csv", manifest);
        write_report_csv(out, result.report);
      }
      const auto metrics = evaluate(result.params, c, result.splits, EvalTarget::test, c.eval_k);
      {
        auto out = open_output(fs::path(out_dir) / "test_metrics.csv", manifest);
        write_eval_csv(out, fs::path(input).stem().string(), metrics, c);
      }
      manifest.extra() = {{"test", eval_json(metrics)}, {"best_epoch", result.report.best_epoch}};
      std::cout << "test rec R@" << c.eval_k << ' ' << metrics.first.recall << " N@" << c.eval_k << ' '
                << metrics.first.ndcg << " | exp R@" << c.eval_k << ' ' << metrics.second.recall << " N@"
                << c.eval_k << ' ' << metrics.second.ndcg << '\n';
    } else if (name == "eval") {
      Checkpoint cp = load_checkpoint(checkpoint);
      const ExperimentConfig c = apply_overrides(cp.config, cmd->remaining());
      manifest.config(c);
      manifest.input(checkpoint);
      manifest.input(input);
      const Corpus corpus = load_corpus(input);
      check_vocab(corpus.items, cp.items, "item");
      check_vocab(corpus.expls, cp.expls, "explanation");
      const auto splits = split_corpus(corpus);
      const auto metrics = evaluate(cp.params, c, splits, EvalTarget::test, k);
      {
        auto out = open_output(fs::path(out_dir) / "eval_metrics.csv", manifest);
        write_eval_csv(out, fs::path(input).stem().string(), metrics, c);
      }
      manifest.extra() = {{"test", eval_json(metrics)}};
      std::cout << "rec R@" << k << ' ' << metrics.first.recall << " N@" << k << ' ' << metrics.first.ndcg
                << " | exp R@" << k << ' ' << metrics.second.recall << " N@" << k << ' ' << metrics.second.ndcg
                << '\n';
    } else if (name == "ablate") {
      const ExperimentConfig c = resolve_config(config_file, cmd->remaining());
      manifest.config(c);
      manifest.input(input);
      const Corpus corpus = load_corpus(input);
      if (grid == "heads") {
        const auto ds = parse_list(ds_text);
        const auto hs = parse_list(heads_text);
        const auto rows = head_sweep(corpus, c, ds, hs);
        auto out = open_output(fs::path(out_dir) / "head_sweep.csv", manifest);
        write_head_sweep_csv(out, rows, c.hash(), c.seed);
      } else {
        const auto rows = grid == "toggles"  ? ablation_grid(corpus, c)
                          : grid == "gating" ? gating_strategy_sweep(corpus, c)
                                             : mi_strategy_sweep(corpus, c);
        auto out = open_output(fs::path(out_dir) / (grid + ".csv"), manifest);
        write_grid_csv(out, rows);
        std::cout << rows.size() << " rows\n";
      }
    } else if (name == "analyze") {
      Checkpoint cp = load_checkpoint(checkpoint);
      manifest.config(cp.config);
      manifest.input(checkpoint);
      manifest.input(input);
      const Corpus corpus = load_corpus(input);
      check_vocab(corpus.items, cp.items, "item");
      check_vocab(corpus.expls, cp.expls, "explanation");
      const auto splits = split_corpus(corpus);
      const ExperimentConfig& c = cp.config;
      json results;
      if (c.effective().time_strategy == TimeStrategy::gated) {
        const GammaAnalysis g = gamma_interval_analysis(cp.params, c, corpus, splits);
        auto out = open_output(fs::path(out_dir) / "gamma_interval.csv", manifest);
        write_gamma_csv(out, g, c.hash(), c.seed);
        results["gamma_rec"] = {{"slope", g.fit_rec.slope}, {"intercept", g.fit_rec.intercept}, {"r", g.fit_rec.r},
                                {"degenerate", g.fit_rec.degenerate}};
        results["gamma_exp"] = {{"slope", g.fit_exp.slope}, {"intercept", g.fit_exp.intercept}, {"r", g.fit_exp.r},
                                {"degenerate", g.fit_exp.degenerate}};
      }
      if (c.effective().mi_mode != MiMode::disabled) {
        const auto mu = mu_points(cp.params, c, corpus, splits);
        std::vector<Point2> pts;
        for (const auto& p : mu) pts.emplace_back(p.mu_rec, p.mu_exp);
        const auto normalized = minmax_normalize(pts);
        const ClusterResult fit = kmeans(normalized, clusters, c.seed);
        auto out = open_output(fs::path(out_dir) / "mu_clusters.csv", manifest);
        write_mu_csv(out, mu, fit, c.hash(), c.seed);
        results["kmeans"] = {{"k", clusters}, {"inertia", fit.inertia}, {"iterations", fit.iterations}};
      }
      manifest.extra() = results;
      std::cout << results.dump(2) << '\n';
    } else if (name == "bench") {
      const auto heads = parse_list(bench_heads);
      const auto lengths = parse_list(lengths_text);
      const std::uint64_t seed = 42;
      const auto latency = incremental_latency(bench_d, heads, lengths, bench_batch, seed);
      {
        auto out = open_output(fs::path(out_dir) / "incremental_latency.csv", manifest);
        write_latency_csv(out, latency, seed);
      }
      std::vector<TrainStepRow> steps;
      for (std::size_t h : heads)
        for (LruMode mode : {LruMode::sequential, LruMode::scan})
          steps.push_back(training_step(bench_d, h, train_n, std::min<std::size_t>(bench_batch, 8), mode, seed));
      {
        auto out = open_output(fs::path(out_dir) / "train_step.csv", manifest);
        write_train_step_csv(out, steps, seed);
      }
      manifest.extra() = {{"d", bench_d}, {"batch", bench_batch}, {"seed", seed},
                          {"baselines", "gru cell and single-head LRU stand in for full baseline encoders"}};
      write_latency_csv(std::cout, latency, seed);
    } else if (name == "synth") {
      const SyntheticCorpus corpus = generate_synthetic(spec);
      const fs::path tsv = fs::path(out_dir) / "interactions.tsv";
      save_interactions(tsv, corpus.interactions);
      manifest.output(tsv);
      {
        auto out = open_output(fs::path(out_dir) / "labels.csv", manifest);
        write_labels_csv(out, corpus);
      }
      manifest.extra() = {{"users", spec.user_count}, {"items", spec.item_count}, {"expls", spec.expl_count},
                          {"clusters", spec.cluster_count}, {"seed", spec.seed}};
      std::cout << "wrote " << corpus.interactions.size() << " interactions to " << tsv.string() << '\n';
    }
    manifest.write();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

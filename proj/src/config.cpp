#include "tmepsr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "tmepsr/errors.hpp"

namespace tmepsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("key '" + key + "' expects a real number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

struct KeySpec {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
KeySpec real_key(T ExperimentConfig::*field) {
  return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_real(k, v); },
          [field](const ExperimentConfig& c) { return format_real(c.*field); }};
}

template <class T>
KeySpec uint_key(T ExperimentConfig::*field) {
  return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*field = static_cast<T>(parse_uint(k, v));
          },
          [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

KeySpec bool_key(bool ExperimentConfig::*field) {
  return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_bool(k, v); },
          [field](const ExperimentConfig& c) { return format_bool(c.*field); }};
}

template <class E, class Parse>
KeySpec enum_key(E ExperimentConfig::*field, Parse parse) {
  return {[field, parse](ExperimentConfig& c, const std::string&, const std::string& v) { c.*field = parse(v); },
          [field](const ExperimentConfig& c) { return to_string(c.*field); }};
}

const std::map<std::string, KeySpec>& registry() {
  static const std::map<std::string, KeySpec> specs = {
      {"alpha", real_key(&ExperimentConfig::alpha)},
      {"beta", real_key(&ExperimentConfig::beta)},
      {"d", uint_key(&ExperimentConfig::d)},
      {"H", uint_key(&ExperimentConfig::H)},
      {"max_len", uint_key(&ExperimentConfig::max_len)},
      {"batch_size", uint_key(&ExperimentConfig::batch_size)},
      {"epochs", uint_key(&ExperimentConfig::epochs)},
      {"seed", uint_key(&ExperimentConfig::seed)},
      {"learning_rate", real_key(&ExperimentConfig::learning_rate)},
      {"adam_beta1", real_key(&ExperimentConfig::adam_beta1)},
      {"adam_beta2", real_key(&ExperimentConfig::adam_beta2)},
      {"adam_eps", real_key(&ExperimentConfig::adam_eps)},
      {"weight_decay", real_key(&ExperimentConfig::weight_decay)},
      {"dropout", real_key(&ExperimentConfig::dropout)},
      {"time_strategy", enum_key(&ExperimentConfig::time_strategy, parse_time_strategy)},
      {"mi_mode", enum_key(&ExperimentConfig::mi_mode, parse_mi_mode)},
      {"lru_mode", enum_key(&ExperimentConfig::lru_mode, parse_lru_mode)},
      {"lru_normalize", bool_key(&ExperimentConfig::lru_normalize)},
      {"mi_candidates", enum_key(&ExperimentConfig::mi_candidates, parse_mi_candidates)},
      {"mi_negatives", uint_key(&ExperimentConfig::mi_negatives)},
      {"time_aware", bool_key(&ExperimentConfig::time_aware)},
      {"multi_interest", bool_key(&ExperimentConfig::multi_interest)},
      {"explanation_personalization", bool_key(&ExperimentConfig::explanation_personalization)},
      {"eval_k", uint_key(&ExperimentConfig::eval_k)},
      {"mask_seen", bool_key(&ExperimentConfig::mask_seen)},
  };
  return specs;
}

}  // namespace

std::string to_string(MiCandidates c) { return c == MiCandidates::full ? "full" : "sampled"; }

MiCandidates parse_mi_candidates(const std::string& name) {
  if (name == "full") return MiCandidates::full;
  if (name == "sampled") return MiCandidates::sampled;
  throw ConfigError("invalid mi_candidates '" + name + "' (expected full, sampled)");
}

ExperimentConfig ExperimentConfig::effective() const {
  ExperimentConfig out = *this;
  if (!time_aware) out.time_strategy = TimeStrategy::disabled;
  if (!multi_interest) out.H = 1;
  if (!explanation_personalization) out.mi_mode = MiMode::disabled;
  return out;
}

void ExperimentConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (d == 0) throw ConfigError("d must be positive");
  if (H == 0 || d % H != 0) {
    throw ConfigError("d=" + std::to_string(d) + " is not divisible by H=" + std::to_string(H));
  }
  if (max_len == 0) throw ConfigError("max_len must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (eval_k == 0) throw ConfigError("eval_k must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& specs = registry();
  auto it = specs.find(key);
  if (it == specs.end()) {
    std::string valid;
    for (const auto& k : keys()) valid += (valid.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
  }
  it->second.set(*this, key, trim(unquote(trim(value))));
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, spec] : registry()) out[key] = spec.get(*this);
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [key, value] : to_map()) out += key + " = " + value + "\n";
  return out;
}

std::string ExperimentConfig::hash() const { return content_hash(to_text()); }

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [key, spec] : registry()) out.push_back(key);
    return out;
  }();
  return names;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return content_hash(bytes.str());
}

}  // namespace tmepsr

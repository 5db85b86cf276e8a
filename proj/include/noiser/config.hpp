#pragma once

#include <map>
#include <string>

#include "noiser/core.hpp"
#include "noiser/pipeline.hpp"

namespace noiser {

// INI-style configuration: [section] headers, key = value pairs, comments
// with '#' or ';'. One file configures the whole pipeline.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>") {
    Config cfg;
    std::string section;
    std::size_t lineno = 0;
    for (const auto& raw : split_lines(text)) {
      ++lineno;
      std::string line = trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw Error(ErrorKind::parse,
                      origin + ":" + std::to_string(lineno) + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorKind::parse,
                    origin + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw Error(ErrorKind::parse, origin + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[section + "." + key] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path) { return parse(read_file(path), path); }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback = {}) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  long get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stol(it->second);
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "key '" + key + "' is not an integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "key '" + key + "' is not a number: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = normalize(it->second);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw Error(ErrorKind::config, "key '" + key + "' is not a boolean: " + it->second);
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::uint64_t content_hash() const {
    std::string all;
    for (const auto& [k, v] : values_) all += k + "=" + v + "\n";
    return fnv1a64(all);
  }

 private:
  std::map<std::string, std::string> values_;
};

// Maps the config file onto the pipeline knobs; every key has the documented
// default.
inline TestbedConfig testbed_config_from(const Config& cfg) {
  TestbedConfig tc;
  tc.instances_path = cfg.get("testbed.instances");
  tc.golden_path = cfg.get("testbed.golden");
  tc.corpus_path = cfg.get("retrieval.corpus");
  tc.corpus_format =
      cfg.get("retrieval.format", "jsonl") == "tsv" ? CorpusFormat::tsv : CorpusFormat::jsonl;
  tc.index_path = cfg.get("retrieval.index");
  tc.wordlist_path = cfg.get("noise.wordlist");
  tc.prompts_dir = cfg.get("noise.prompts_dir");
  tc.sample_n = static_cast<std::size_t>(cfg.get_int("testbed.sample_n", 500));
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("testbed.seed", 0));
  tc.out_dir = cfg.get("testbed.out_dir", "runs/out");
  tc.entail_threshold = cfg.get_double("verification.entail_threshold", kEntailmentThreshold);
  tc.semantic_threshold =
      cfg.get_double("retrieval.semantic_threshold", kDefaultSemanticThreshold);
  tc.top_k = static_cast<int>(cfg.get_int("retrieval.top_k", kDefaultTopK));
  tc.ortho_ratio = cfg.get_double("noise.ortho_ratio", 0.3);
  if (cfg.has("noise.ortho_actions")) {
    tc.ortho_actions.clear();
    for (const auto& a : split_ws(cfg.get("noise.ortho_actions")))
      tc.ortho_actions.push_back(parse_ortho_action(a));
  }
  tc.isn_words_min = static_cast<int>(cfg.get_int("noise.isn_words_min", 8));
  tc.isn_words_max = static_cast<int>(cfg.get_int("noise.isn_words_max", 15));
  tc.isn_sentences = static_cast<int>(cfg.get_int("noise.isn_sentences", 2));
  tc.datatype_variant = parse_datatype_variant(cfg.get("noise.datatype_variant", "url"));
  tc.gen_max_attempts = static_cast<int>(cfg.get_int("noise.gen_max_attempts", 3));
  tc.embed_batch = static_cast<std::size_t>(cfg.get_int("retrieval.embed_batch", 16));
  tc.model_tag = cfg.get("retrieval.model_tag", "default");
  int total_docs = static_cast<int>(cfg.get_int("testbed.total_docs", 5));
  std::string mode = cfg.get("testbed.scenarios", "default");
  if (mode == "default")
    tc.scenarios = default_scenarios(total_docs);
  else if (mode == "prior")
    tc.scenarios = prior_scenarios();
  else
    throw Error(ErrorKind::config, "unknown scenario set '" + mode + "'");
  return tc;
}

inline ClientPolicy client_policy_from(const Config& cfg) {
  ClientPolicy p;
  p.max_retries = static_cast<int>(cfg.get_int("clients.max_retries", 3));
  p.backoff_initial = std::chrono::milliseconds(cfg.get_int("clients.backoff_initial_ms", 200));
  p.backoff_max = std::chrono::milliseconds(cfg.get_int("clients.backoff_max_ms", 5000));
  p.timeout = std::chrono::milliseconds(cfg.get_int("clients.timeout_ms", 30000));
  p.max_in_flight = static_cast<int>(cfg.get_int("clients.max_in_flight", 4));
  return p;
}

}  // namespace noiser

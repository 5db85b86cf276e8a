#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "noiser/clients.hpp"
#include "noiser/core.hpp"
#include "noiser/noise.hpp"
#include "noiser/retrieval.hpp"
#include "noiser/testbed.hpp"
#include "noiser/verification.hpp"

namespace noiser {

inline constexpr const char* kPipelineVersion = "0.1.0";

struct TestbedConfig {
  std::string instances_path;
  std::string golden_path;
  std::string corpus_path;  // required only when a scenario uses SeN or SuN
  CorpusFormat corpus_format = CorpusFormat::jsonl;
  std::string index_path;   // cached alongside the corpus; rebuilt when absent
  std::string wordlist_path;
  std::string prompts_dir;
  std::vector<ScenarioSpec> scenarios = default_scenarios();
  std::size_t sample_n = 500;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/out";

  double entail_threshold = kEntailmentThreshold;
  double semantic_threshold = kDefaultSemanticThreshold;
  int top_k = kDefaultTopK;
  double ortho_ratio = 0.3;
  std::vector<OrthoAction> ortho_actions{OrthoAction::insert, OrthoAction::erase,
                                         OrthoAction::substitute, OrthoAction::swap};
  int isn_words_min = 8;
  int isn_words_max = 15;
  int isn_sentences = 2;
  DatatypeVariant datatype_variant = DatatypeVariant::url;
  int gen_max_attempts = 3;
  std::size_t embed_batch = 16;
  std::string model_tag = "default";

  json describe() const {
    json scenario_names = json::array();
    for (const auto& s : scenarios) scenario_names.push_back(s.name);
    json actions = json::array();
    for (auto a : ortho_actions) actions.push_back(to_string(a));
    return json{{"instances", instances_path},
                {"golden", golden_path},
                {"corpus", corpus_path},
                {"wordlist", wordlist_path},
                {"scenarios", scenario_names},
                {"sample_n", sample_n},
                {"seed", seed},
                {"entail_threshold", entail_threshold},
                {"semantic_threshold", semantic_threshold},
                {"top_k", top_k},
                {"ortho_ratio", ortho_ratio},
                {"ortho_actions", actions},
                {"isn_words_min", isn_words_min},
                {"isn_words_max", isn_words_max},
                {"isn_sentences", isn_sentences},
                {"datatype_variant", to_string(datatype_variant)},
                {"gen_max_attempts", gen_max_attempts},
                {"embed_batch", embed_batch},
                {"model_tag", model_tag}};
  }
};

struct BuildCounts {
  std::size_t loaded = 0;
  std::size_t invalid = 0;
  std::size_t routed_prior = 0;
  std::size_t dropped_ambiguous = 0;
  std::size_t dropped_no_golden = 0;
  std::size_t dropped_entailment = 0;
  std::size_t sampled = 0;
  std::size_t items = 0;
};

struct BuildResult {
  std::vector<TestbedItem> items;
  json manifest;
  std::string testbed_path;
  std::string manifest_path;
  std::string review_path;
  BuildCounts counts;
};

namespace detail {

inline std::string file_hash_hex(const std::string& path) {
  return to_hex(fnv1a64(read_file(path)));
}

inline std::map<std::string, NoiseDocument> golden_by_instance(
    const std::vector<NoiseDocument>& docs) {
  std::map<std::string, NoiseDocument> out;
  for (const auto& d : docs) {
    if (!d.gen_meta.contains("instance_id")) continue;
    std::string id = d.gen_meta["instance_id"].get<std::string>();
    auto it = out.find(id);
    if (it == out.end() || d.doc_id < it->second.doc_id) out[id] = d;
  }
  return out;
}

inline std::map<NoiseKind, int> pool_needs(const std::vector<ScenarioSpec>& scenarios) {
  std::map<NoiseKind, int> need;
  for (const auto& s : scenarios)
    for (const auto& kc : s.noise_kinds)
      need[kc.kind] = std::max(need[kc.kind], kc.count);
  return need;
}

inline bool any_include_golden(const std::vector<ScenarioSpec>& scenarios) {
  for (const auto& s : scenarios)
    if (s.include_golden) return true;
  return false;
}

}  // namespace detail

// Runs the four construction steps end to end: validation and the ambiguity
// gate, entailment verification of golden evidence, per-dataset sampling,
// noise generation, MCQ conversion and scenario assembly. Deterministic for a
// fixed (config, client transcripts).
inline BuildResult build_testbed(const TestbedConfig& cfg, ClientBundle& clients) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  PromptLibrary prompts(cfg.prompts_dir);
  PromptTemplate hypothesis_tpl = prompts.get("hypothesis");
  PromptTemplate judge_tpl = prompts.get("ambiguity_judge");

  BuildResult result;
  result.review_path = (fs::path(cfg.out_dir) / "review_queue.jsonl").string();
  ReviewQueue review(result.review_path);
  BuildCounts& counts = result.counts;

  // Stage: load
  std::vector<QAInstance> instances = with_stage("load", [&] {
    auto loaded = read_jsonl<QAInstance>(cfg.instances_path);
    std::map<std::string, bool> ids;
    for (const auto& i : loaded) {
      if (!ids.emplace(i.id, true).second)
        throw Error(ErrorKind::input, "duplicate instance id '" + i.id + "'");
    }
    return loaded;
  });
  counts.loaded = instances.size();

  with_stage("load", [&] {
    std::map<std::string, bool> names;
    for (const auto& s : cfg.scenarios) {
      auto v = validate_scenario(s);
      if (!v.empty())
        throw Error(ErrorKind::config, "scenario '" + s.name + "': " + join(v, ", "));
      if (!names.emplace(s.name, true).second)
        throw Error(ErrorKind::config, "duplicate scenario name '" + s.name + "'");
    }
    return 0;
  });

  std::vector<QAInstance> valid;
  for (auto& inst : instances) {
    auto violations = validate_instance(inst);
    if (!violations.empty()) {
      ++counts.invalid;
      review.record(inst.id, "validate", {false, "invalid: " + join(violations, ", "), {}});
      continue;
    }
    if (inst.prior_flaw) {
      ++counts.routed_prior;
      review.record(inst.id, "validate", {false, "prior instance, use prior mode", {}});
      continue;
    }
    valid.push_back(std::move(inst));
  }

  // Stage: ambiguity gate (Step 1)
  std::vector<QAInstance> unambiguous;
  with_stage("ambiguity", [&] {
    for (auto& inst : valid) {
      GateDecision d = filter_ambiguous(inst, *clients.chat, &judge_tpl);
      review.record(inst.id, "ambiguity", d);
      if (d.keep)
        unambiguous.push_back(std::move(inst));
      else
        ++counts.dropped_ambiguous;
    }
    return 0;
  });

  // Stage: entailment gate over golden evidence (Step 2)
  auto golden_docs = with_stage("entailment", [&] {
    return detail::golden_by_instance(read_jsonl<NoiseDocument>(cfg.golden_path));
  });
  std::vector<QAInstance> gated;
  std::map<std::string, NoiseDocument> golden_for;
  with_stage("entailment", [&] {
    for (auto& inst : unambiguous) {
      auto it = golden_docs.find(inst.id);
      if (it == golden_docs.end()) {
        ++counts.dropped_no_golden;
        review.record(inst.id, "entailment", {false, "no golden evidence", {}});
        continue;
      }
      GateDecision d = entailment_gate(it->second.text, inst, *clients.nli,
                                       cfg.entail_threshold, &hypothesis_tpl);
      review.record(inst.id, "entailment", d);
      if (!d.keep) {
        ++counts.dropped_entailment;
        continue;
      }
      NoiseDocument golden = it->second;
      golden.kind = NoiseKind::golden;
      golden.gen_meta["p_entail"] = d.score ? *d.score : 0.0;
      golden_for[inst.id] = std::move(golden);
      gated.push_back(std::move(inst));
    }
    return 0;
  });

  // Stage: per-dataset sampling (Step 4 size rule, applied before generation)
  std::vector<QAInstance> sampled = with_stage("sample", [&] {
    std::map<std::string, std::vector<QAInstance>> by_dataset;
    for (auto& inst : gated) by_dataset[inst.source_dataset].push_back(std::move(inst));
    std::vector<QAInstance> out;
    for (auto& [dataset, group] : by_dataset) {
      auto picked = sample_dataset(std::move(group), cfg.sample_n,
                                   mix_seed(cfg.seed, "sample", fnv1a64(dataset)));
      out.insert(out.end(), picked.begin(), picked.end());
    }
    std::sort(out.begin(), out.end(),
              [](const QAInstance& a, const QAInstance& b) { return a.id < b.id; });
    return out;
  });
  counts.sampled = sampled.size();

  // Stage: noise generation (Step 3) and retrieval setup
  std::map<NoiseKind, int> need = detail::pool_needs(cfg.scenarios);
  bool needs_retrieval = need.count(NoiseKind::semantic) || need.count(NoiseKind::supportive);
  PassageCorpus corpus;
  EmbeddingIndex index;
  if (needs_retrieval) {
    with_stage("retrieval", [&] {
      if (cfg.corpus_path.empty())
        throw Error(ErrorKind::config, "scenarios use retrieval noise but no corpus is set");
      corpus = ingest_corpus(cfg.corpus_path, cfg.corpus_format);
      std::string index_path = cfg.index_path.empty() ? cfg.corpus_path + ".idx" : cfg.index_path;
      if (fs::exists(index_path)) {
        index = load_index(index_path, corpus);
      } else {
        index = build_index(corpus, *clients.embed, cfg.embed_batch, cfg.model_tag);
        save_index(index, index_path);
      }
      return 0;
    });
  }
  std::vector<std::string> wordlist;
  if (need.count(NoiseKind::illegal_sentence)) {
    with_stage("noise", [&] {
      if (cfg.wordlist_path.empty())
        throw Error(ErrorKind::config, "scenarios use illegal sentence noise but no wordlist is set");
      wordlist = load_wordlist(cfg.wordlist_path);
      return 0;
    });
  }

  PromptTemplate cf_tpl = prompts.get("counterfactual");
  PromptTemplate dn_tpl = prompts.get("datatype");
  GenOptions gen;
  gen.max_attempts = cfg.gen_max_attempts;
  gen.entail_threshold = cfg.entail_threshold;
  gen.seed = cfg.seed;
  gen.hypothesis = &hypothesis_tpl;

  result.items.reserve(sampled.size() * cfg.scenarios.size());
  for (const auto& inst : sampled) {
    std::uint64_t inst_hash = fnv1a64(inst.id);
    std::map<NoiseKind, std::vector<NoiseDocument>> pools;
    pools[NoiseKind::golden] = {golden_for.at(inst.id)};
    const NoiseDocument& golden = pools[NoiseKind::golden].front();

    std::vector<std::string> distractors;
    with_stage("noise", [&] {
      // Counterfactuals double as MCQ distractors for open instances.
      int cn_need = need.count(NoiseKind::counterfactual) ? need[NoiseKind::counterfactual] : 0;
      if (inst.options_hint == OptionsHint::open) {
        GenOptions cf_gen = gen;
        cf_gen.prompt = &cf_tpl;
        auto cfs = make_counterfactuals(inst, *clients.search, *clients.chat, *clients.nli, 2,
                                        cf_gen);
        distractors = {cfs[0].cf_answer, cfs[1].cf_answer};
        if (cn_need > 0) {
          auto& pool = pools[NoiseKind::counterfactual];
          for (auto& cf : cfs) pool.push_back(std::move(cf.cf_doc));
          for (int v = 1; static_cast<int>(pool.size()) < cn_need && v < cn_need; ++v) {
            for (const auto& answer : distractors) {
              if (static_cast<int>(pool.size()) >= cn_need) break;
              auto doc = counterfactual_evidence(inst, answer, *clients.chat, *clients.nli, v,
                                                 cf_gen);
              if (doc) pool.push_back(std::move(*doc));
            }
          }
        }
      } else if (cn_need > 0) {
        auto& pool = pools[NoiseKind::counterfactual];
        GenOptions cf_gen = gen;
        cf_gen.prompt = &cf_tpl;
        for (int v = 0; v < cn_need; ++v) {
          auto doc = boolean_counterfactual(inst, *clients.chat, *clients.nli, v, cf_gen);
          if (doc) pool.push_back(std::move(*doc));
        }
      }

      if (auto it = need.find(NoiseKind::supportive); it != need.end())
        pools[NoiseKind::supportive] =
            select_supportive(inst, index, corpus, *clients.embed, *clients.nli,
                              static_cast<std::size_t>(cfg.top_k), cfg.entail_threshold);
      if (auto it = need.find(NoiseKind::semantic); it != need.end())
        pools[NoiseKind::semantic] =
            select_semantic(inst, index, corpus, *clients.embed, cfg.semantic_threshold,
                            static_cast<std::size_t>(it->second), cfg.seed);
      if (auto it = need.find(NoiseKind::illegal_sentence); it != need.end()) {
        auto& pool = pools[NoiseKind::illegal_sentence];
        for (int i = 0; i < it->second; ++i) {
          IllegalSentenceConfig isn;
          isn.vocabulary = wordlist;
          isn.words_min = cfg.isn_words_min;
          isn.words_max = cfg.isn_words_max;
          isn.sentences = cfg.isn_sentences;
          isn.seed = mix_seed(mix_seed(cfg.seed, "isn", inst_hash), "doc",
                              static_cast<std::uint64_t>(i));
          pool.push_back(gen_illegal_sentences(isn));
        }
      }
      if (auto it = need.find(NoiseKind::datatype); it != need.end()) {
        auto& pool = pools[NoiseKind::datatype];
        GenOptions dn_gen = gen;
        dn_gen.prompt = &dn_tpl;
        for (int i = 0; i < it->second; ++i) {
          DatatypeVariant variant =
              (i % 2 == 0) == (cfg.datatype_variant == DatatypeVariant::url)
                  ? DatatypeVariant::url
                  : DatatypeVariant::code;
          pool.push_back(make_datatype_noise(golden, variant, *clients.chat, inst, dn_gen, i / 2));
        }
      }
      if (auto it = need.find(NoiseKind::orthographic); it != need.end()) {
        auto& pool = pools[NoiseKind::orthographic];
        for (int i = 0; i < it->second; ++i) {
          OrthoConfig ortho;
          ortho.ratio = cfg.ortho_ratio;
          ortho.actions = cfg.ortho_actions;
          ortho.seed = mix_seed(mix_seed(cfg.seed, "on", inst_hash), "doc",
                                static_cast<std::uint64_t>(i));
          pool.push_back(make_orthographic_noise(golden, ortho));
        }
      }
      return 0;
    });

    // Steps 4: MCQ conversion and scenario assembly
    with_stage("assemble", [&] {
      std::uint64_t item_seed = mix_seed(cfg.seed, "mcq", inst_hash);
      McqResult mcq = to_multiple_choice(inst, distractors, item_seed);
      for (const auto& scenario : cfg.scenarios) {
        TestbedItem item;
        item.item_id = inst.id + "::" + scenario.name;
        item.instance = inst;
        item.options = mcq.options;
        item.golden_letter = mcq.golden_letter;
        item.scenario = scenario;
        item.seed = item_seed;
        item.documents = assemble_scenario(
            scenario, pools, mix_seed(cfg.seed, "scenario", fnv1a64(item.item_id)));
        auto violations = validate_testbed_item(item);
        if (!violations.empty())
          throw Error(ErrorKind::input,
                      "item " + item.item_id + " failed validation: " + join(violations, ", "));
        result.items.push_back(std::move(item));
      }
      return 0;
    });
  }

  // Stage: write
  return with_stage("write", [&]() -> BuildResult {
    std::sort(result.items.begin(), result.items.end(),
              [](const TestbedItem& a, const TestbedItem& b) { return a.item_id < b.item_id; });
    counts.items = result.items.size();
    result.testbed_path = (fs::path(cfg.out_dir) / "testbed.jsonl").string();
    write_jsonl(result.testbed_path, result.items);

    json per_scenario = json::object();
    for (const auto& s : cfg.scenarios) {
      std::size_t n = 0;
      for (const auto& item : result.items)
        if (item.scenario.name == s.name) ++n;
      per_scenario[s.name] = n;
    }
    json per_dataset = json::object();
    for (const auto& inst : sampled)
      per_dataset[inst.source_dataset] =
          per_dataset.value(inst.source_dataset, 0) + 1;

    json cfg_json = cfg.describe();
    result.manifest = json{
        {"pipeline_version", kPipelineVersion},
        {"stage_versions",
         json{{"gates", "1"}, {"noise", "1"}, {"retrieval", "1"}, {"assemble", "1"}}},
        {"seed", cfg.seed},
        {"config", cfg_json},
        {"config_hash", to_hex(fnv1a64(cfg_json.dump()))},
        {"counts",
         json{{"loaded", counts.loaded},
              {"invalid", counts.invalid},
              {"routed_prior", counts.routed_prior},
              {"dropped_ambiguous", counts.dropped_ambiguous},
              {"dropped_no_golden", counts.dropped_no_golden},
              {"dropped_entailment", counts.dropped_entailment},
              {"sampled", counts.sampled},
              {"items", counts.items}}},
        {"per_scenario", per_scenario},
        {"per_dataset", per_dataset},
        {"inputs", json{{"instances", detail::file_hash_hex(cfg.instances_path)},
                        {"golden", detail::file_hash_hex(cfg.golden_path)}}},
        {"testbed_hash", detail::file_hash_hex(result.testbed_path)},
    };
    if (clients.transcript)
      result.manifest["transcript_hash"] = to_hex(clients.transcript->content_hash());
    result.manifest_path = (fs::path(cfg.out_dir) / "manifest.json").string();
    write_file(result.manifest_path, result.manifest.dump(2) + "\n");
    return std::move(result);
  });
}

// Prior-noise testbed: items carry the verdict option triple and scenarios
// from prior_scenarios(). Misleading documents restate the flawed premise;
// background documents come from entity-decomposed search.
inline BuildResult build_prior_testbed(const TestbedConfig& cfg, ClientBundle& clients) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  BuildResult result;
  result.review_path = (fs::path(cfg.out_dir) / "review_queue.jsonl").string();
  ReviewQueue review(result.review_path);
  BuildCounts& counts = result.counts;

  std::vector<QAInstance> instances = with_stage("load", [&] {
    return read_jsonl<QAInstance>(cfg.instances_path);
  });
  counts.loaded = instances.size();

  std::vector<QAInstance> prior;
  for (auto& inst : instances) {
    auto violations = validate_instance(inst);
    if (!violations.empty() || !inst.prior_flaw) {
      ++counts.invalid;
      review.record(inst.id, "validate",
                    {false, violations.empty() ? "not a prior instance" : join(violations, ", "),
                     {}});
      continue;
    }
    prior.push_back(std::move(inst));
  }
  std::vector<QAInstance> sampled =
      sample_dataset(std::move(prior), cfg.sample_n, mix_seed(cfg.seed, "sample"));
  counts.sampled = sampled.size();

  std::vector<ScenarioSpec> scenarios = cfg.scenarios;
  std::map<NoiseKind, int> need = detail::pool_needs(scenarios);

  for (const auto& inst : sampled) {
    std::uint64_t inst_hash = fnv1a64(inst.id);
    std::map<NoiseKind, std::vector<NoiseDocument>> pools;

    with_stage("noise", [&] {
      if (auto it = need.find(NoiseKind::counterfactual); it != need.end()) {
        auto& pool = pools[NoiseKind::counterfactual];
        for (int v = 0; v < it->second; ++v) {
          ChatRequest req;
          req.user = "Write a short passage fully consistent with the premise of this "
                     "question, treating it as fact: " + inst.question;
          if (v > 0) req.user += "\nWrite variant " + std::to_string(v + 1) + ".";
          NoiseDocument doc;
          doc.doc_id = "pn-mislead-" + inst.id + "-" + std::to_string(v);
          doc.text = clients.chat->chat(req);
          doc.kind = NoiseKind::counterfactual;
          doc.gen_meta = json{{"mode", "misleading"}, {"instance_id", inst.id}};
          pool.push_back(std::move(doc));
        }
      }
      if (auto it = need.find(NoiseKind::supportive); it != need.end()) {
        auto& pool = pools[NoiseKind::supportive];
        std::vector<std::string> entities;
        for (const auto& hit : clients.search->web_search(inst.question))
          for (const auto& e : hit.entities) entities.push_back(e);
        int i = 0;
        for (const auto& entity : entities) {
          if (static_cast<int>(pool.size()) >= it->second) break;
          auto hits = clients.search->web_search(entity);
          if (hits.empty()) continue;
          NoiseDocument doc;
          doc.doc_id = "pn-bg-" + inst.id + "-" + std::to_string(i++);
          doc.text = hits.front().title + ": " + hits.front().snippet;
          doc.kind = NoiseKind::supportive;
          doc.gen_meta = json{{"mode", "background"}, {"entity", entity},
                              {"instance_id", inst.id}};
          pool.push_back(std::move(doc));
        }
      }
      return 0;
    });

    with_stage("assemble", [&] {
      std::uint64_t item_seed = mix_seed(cfg.seed, "mcq", inst_hash);
      McqResult mcq = to_prior_choice(item_seed);
      for (const auto& scenario : scenarios) {
        TestbedItem item;
        item.item_id = inst.id + "::" + scenario.name;
        item.instance = inst;
        item.options = mcq.options;
        item.golden_letter = mcq.golden_letter;
        item.scenario = scenario;
        item.seed = item_seed;
        item.documents = assemble_scenario(
            scenario, pools, mix_seed(cfg.seed, "scenario", fnv1a64(item.item_id)));
        result.items.push_back(std::move(item));
      }
      return 0;
    });
  }

  return with_stage("write", [&]() -> BuildResult {
    std::sort(result.items.begin(), result.items.end(),
              [](const TestbedItem& a, const TestbedItem& b) { return a.item_id < b.item_id; });
    counts.items = result.items.size();
    result.testbed_path = (fs::path(cfg.out_dir) / "testbed.jsonl").string();
    write_jsonl(result.testbed_path, result.items);
    result.manifest = json{{"pipeline_version", kPipelineVersion},
                           {"mode", "prior"},
                           {"seed", cfg.seed},
                           {"counts",
                            json{{"loaded", counts.loaded},
                                 {"invalid", counts.invalid},
                                 {"sampled", counts.sampled},
                                 {"items", counts.items}}},
                           {"testbed_hash", detail::file_hash_hex(result.testbed_path)}};
    if (clients.transcript)
      result.manifest["transcript_hash"] = to_hex(clients.transcript->content_hash());
    result.manifest_path = (fs::path(cfg.out_dir) / "manifest.json").string();
    write_file(result.manifest_path, result.manifest.dump(2) + "\n");
    return std::move(result);
  });
}

}  // namespace noiser

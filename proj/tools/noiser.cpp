// noiser command line: builds noise-perturbed multiple-choice testbeds from a
// QA corpus and evaluates chat endpoints across noise scenarios.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "noiser/config.hpp"
#include "noiser/eval.hpp"
#include "noiser/http_clients.hpp"
#include "noiser/noise.hpp"
#include "noiser/pipeline.hpp"
#include "noiser/retrieval.hpp"
#include "noiser/stats.hpp"
#include "noiser/sweep.hpp"

namespace fs = std::filesystem;
using namespace noiser;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool mock = false;
  std::string replay_path;
  std::string out_dir = "runs/out";
  std::string api_base;
  std::string api_key;
  std::string search_key;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? v : fallback;
}

ClientBundle make_clients(const GlobalFlags& g, const ClientPolicy& policy) {
  if (g.mock && !g.replay_path.empty())
    throw Error(ErrorKind::config, "--mock and --replay are mutually exclusive");
  if (!g.replay_path.empty()) return make_replay_bundle(g.replay_path);
  fs::create_directories(g.out_dir);
  std::string transcript = (fs::path(g.out_dir) / "transcript.jsonl").string();
  if (g.mock) return with_recording(make_mock_bundle(), transcript);
  HttpEndpoints ep;
  ep.api_base = !g.api_base.empty() ? g.api_base : env_or("NOISER_API_BASE", "");
  ep.api_key = !g.api_key.empty() ? g.api_key : env_or("NOISER_API_KEY", "");
  ep.search_key = !g.search_key.empty() ? g.search_key : env_or("NOISER_SEARCH_KEY", "");
  return with_recording(make_http_bundle(ep, policy), transcript);
}

Config load_config(const GlobalFlags& g) {
  if (g.config_path.empty()) return Config::parse("");
  return Config::load(g.config_path);
}

TestbedConfig make_testbed_config(const GlobalFlags& g, const Config& cfg) {
  TestbedConfig tc = testbed_config_from(cfg);
  if (g.seed_set) tc.seed = g.seed;
  tc.out_dir = g.out_dir;
  return tc;
}

std::vector<double> parse_ratios(const std::string& csv) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t comma = csv.find(',', start);
    std::string tok = trim(csv.substr(start, comma == std::string::npos ? std::string::npos
                                                                        : comma - start));
    if (!tok.empty()) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw Error(ErrorKind::config, "bad ratio '" + tok + "'");
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw Error(ErrorKind::config, "no ratios given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noiser: noisy RAG testbed construction and evaluation"};
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--config", g.config_path, "pipeline config file (INI)");
  auto* seed_opt = app.add_option("--seed", g.seed, "override the pipeline seed");
  app.add_flag("--mock", g.mock, "use deterministic offline mock clients");
  app.add_option("--replay", g.replay_path, "replay client responses from a transcript");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_option("--api-base", g.api_base, "chat/embedding endpoint base url");
  app.add_option("--api-key", g.api_key, "endpoint api key");
  app.add_option("--search-key", g.search_key, "web search api key");

  auto* c_ingest = app.add_subcommand("ingest", "parse and normalize a passage corpus");
  std::string in_path, in_format = "jsonl", out_path;
  c_ingest->add_option("--in", in_path, "corpus file")->required();
  c_ingest->add_option("--format", in_format, "jsonl or tsv");
  c_ingest->add_option("--out-file", out_path, "normalized JSONL output");

  auto* c_index = app.add_subcommand("index", "embed a corpus into a dense index");
  std::string idx_corpus, idx_format = "jsonl", idx_out, idx_tag = "default";
  c_index->add_option("--corpus", idx_corpus, "corpus file")->required();
  c_index->add_option("--format", idx_format, "jsonl or tsv");
  c_index->add_option("--out-file", idx_out, "index file path");
  c_index->add_option("--tag", idx_tag, "embedding model tag");

  auto* c_gate = app.add_subcommand("gate", "run the ambiguity and entailment gates");
  std::string gate_instances, gate_golden;
  c_gate->add_option("--instances", gate_instances, "QA instances JSONL")->required();
  c_gate->add_option("--golden", gate_golden, "golden evidence JSONL")->required();

  auto* c_noise = app.add_subcommand("noise", "generate noise documents of one kind");
  std::string noise_kind, noise_text, noise_wordlist;
  double noise_ratio = 0.3;
  int noise_count = 1;
  std::uint64_t noise_seed = 0;
  c_noise->add_option("--kind", noise_kind, "orthographic or illegal")->required();
  c_noise->add_option("--text", noise_text, "input text (orthographic)");
  c_noise->add_option("--ratio", noise_ratio, "target character error rate");
  c_noise->add_option("--wordlist", noise_wordlist, "wordlist file (illegal)");
  c_noise->add_option("--count", noise_count, "documents to emit");
  c_noise->add_option("--noise-seed", noise_seed, "generator seed");

  auto* c_assemble = app.add_subcommand("assemble", "build the testbed end to end");
  bool assemble_prior = false;
  c_assemble->add_flag("--prior", assemble_prior, "build the prior-noise testbed");

  auto* c_eval = app.add_subcommand("eval", "evaluate a chat endpoint on a testbed");
  std::string eval_testbed, eval_scenario, eval_records;
  bool eval_resume = false;
  int eval_parallel = 1;
  c_eval->add_option("--testbed", eval_testbed, "testbed JSONL")->required();
  c_eval->add_option("--scenario", eval_scenario, "scenario name (default: all)");
  c_eval->add_option("--records", eval_records, "records JSONL output");
  c_eval->add_flag("--resume", eval_resume, "resume an interrupted run");
  c_eval->add_option("--parallel", eval_parallel, "max in-flight requests");

  auto* c_sweep = app.add_subcommand("sweep", "orthographic ratio sweep with ISN overlay");
  std::string sweep_ratios = "0,0.2,0.4";
  bool sweep_no_overlay = false;
  c_sweep->add_option("--ratios", sweep_ratios, "comma separated ratios");
  c_sweep->add_flag("--no-overlay", sweep_no_overlay, "skip the +ISN rows");

  auto* c_stats = app.add_subcommand("stats", "Wilcoxon signed-rank test between two runs");
  std::vector<std::string> stats_pairs;
  std::string stats_level = "item";
  c_stats->add_option("--pairs", stats_pairs, "two records JSONL files")
      ->expected(2)
      ->required();
  c_stats->add_option("--level", stats_level, "pairing level: item or dataset");

  auto* c_report = app.add_subcommand("report", "accuracy tables from evaluation records");
  std::string report_records, report_baseline = "Golden Only", report_format = "markdown";
  c_report->add_option("--records", report_records, "records JSONL")->required();
  c_report->add_option("--baseline", report_baseline, "baseline scenario for deltas");
  c_report->add_option("--format", report_format, "markdown, csv, json or plotdata");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    Config cfg = load_config(g);
    ClientPolicy policy = client_policy_from(cfg);

    if (*c_ingest) {
      CorpusFormat fmt = in_format == "tsv" ? CorpusFormat::tsv : CorpusFormat::jsonl;
      PassageCorpus corpus = ingest_corpus(in_path, fmt);
      if (!out_path.empty()) write_jsonl(out_path, corpus.passages);
      std::cout << "ingested " << corpus.passages.size() << " passages from " << in_path
                << "\n";
      return 0;
    }

    if (*c_index) {
      CorpusFormat fmt = idx_format == "tsv" ? CorpusFormat::tsv : CorpusFormat::jsonl;
      PassageCorpus corpus = ingest_corpus(idx_corpus, fmt);
      ClientBundle clients = make_clients(g, policy);
      EmbeddingIndex index = build_index(corpus, *clients.embed, 16, idx_tag);
      std::string out = idx_out.empty() ? idx_corpus + ".idx" : idx_out;
      save_index(index, out);
      std::cout << "indexed " << index.rows() << " passages, dim " << index.dim << " -> "
                << out << "\n";
      return 0;
    }

    if (*c_gate) {
      ClientBundle clients = make_clients(g, policy);
      fs::create_directories(g.out_dir);
      ReviewQueue review((fs::path(g.out_dir) / "review_queue.jsonl").string());
      auto instances = read_jsonl<QAInstance>(gate_instances);
      auto golden = read_jsonl<NoiseDocument>(gate_golden);
      std::map<std::string, NoiseDocument> by_inst;
      for (const auto& d : golden)
        if (d.gen_meta.contains("instance_id"))
          by_inst.emplace(d.gen_meta["instance_id"].get<std::string>(), d);
      std::vector<QAInstance> kept;
      for (const auto& inst : instances) {
        auto violations = validate_instance(inst);
        if (!violations.empty()) {
          review.record(inst.id, "validate", {false, join(violations, ", "), {}});
          continue;
        }
        GateDecision a = filter_ambiguous(inst, *clients.chat);
        review.record(inst.id, "ambiguity", a);
        if (!a.keep) continue;
        auto it = by_inst.find(inst.id);
        if (it == by_inst.end()) {
          review.record(inst.id, "entailment", {false, "no golden evidence", {}});
          continue;
        }
        GateDecision e = entailment_gate(it->second.text, inst, *clients.nli);
        review.record(inst.id, "entailment", e);
        if (e.keep) kept.push_back(inst);
      }
      std::string kept_path = (fs::path(g.out_dir) / "kept_instances.jsonl").string();
      write_jsonl(kept_path, kept);
      std::cout << "kept " << kept.size() << " of " << instances.size() << " instances -> "
                << kept_path << "\n";
      return 0;
    }

    if (*c_noise) {
      if (noise_kind == "orthographic") {
        if (noise_text.empty())
          throw Error(ErrorKind::config, "--text is required for orthographic noise");
        OrthoConfig oc;
        oc.ratio = noise_ratio;
        oc.seed = noise_seed;
        auto [noisy, cer] = inject_orthographic(noise_text, oc);
        std::cout << noisy << "\n";
        std::cerr << "achieved_cer=" << cer << "\n";
        return 0;
      }
      if (noise_kind == "illegal") {
        if (noise_wordlist.empty())
          throw Error(ErrorKind::config, "--wordlist is required for illegal noise");
        IllegalSentenceConfig ic;
        ic.vocabulary = load_wordlist(noise_wordlist);
        std::vector<NoiseDocument> docs;
        for (int i = 0; i < noise_count; ++i) {
          ic.seed = mix_seed(noise_seed, "cli-isn", static_cast<std::uint64_t>(i));
          docs.push_back(gen_illegal_sentences(ic));
        }
        fs::create_directories(g.out_dir);
        std::string path = (fs::path(g.out_dir) / "illegal.jsonl").string();
        write_jsonl(path, docs);
        std::cout << "wrote " << docs.size() << " documents -> " << path << "\n";
        return 0;
      }
      throw Error(ErrorKind::config, "unknown noise kind '" + noise_kind + "'");
    }

    if (*c_assemble) {
      ClientBundle clients = make_clients(g, policy);
      TestbedConfig tc = make_testbed_config(g, cfg);
      if (assemble_prior && tc.scenarios.front().name != "Misleading")
        tc.scenarios = prior_scenarios();
      BuildResult result = assemble_prior ? build_prior_testbed(tc, clients)
                                          : build_testbed(tc, clients);
      std::cout << "testbed: " << result.testbed_path << "\n"
                << "manifest: " << result.manifest_path << "\n"
                << "items: " << result.counts.items << " (sampled "
                << result.counts.sampled << " instances)\n";
      return 0;
    }

    if (*c_eval) {
      ClientBundle clients = make_clients(g, policy);
      auto testbed = read_jsonl<TestbedItem>(eval_testbed);
      EvalOptions opt;
      fs::create_directories(g.out_dir);
      opt.records_path = eval_records.empty()
                             ? (fs::path(g.out_dir) / "records.jsonl").string()
                             : eval_records;
      opt.resume = eval_resume;
      opt.max_parallel = std::min(eval_parallel, policy.max_in_flight);
      auto records = run_eval(testbed, eval_scenario, *clients.chat, opt);
      std::cout << "evaluated " << records.size() << " items, accuracy "
                << detail::fmt_pct(accuracy(records)) << "%, uncertainty "
                << detail::fmt_pct(uncertainty_rate(records) * 100.0) << "% -> "
                << opt.records_path << "\n";
      return 0;
    }

    if (*c_sweep) {
      ClientBundle clients = make_clients(g, policy);
      TestbedConfig tc = make_testbed_config(g, cfg);
      auto ratios = parse_ratios(sweep_ratios);
      auto builder = make_sweep_builder(tc, clients);
      auto rows = ratio_sweep(builder, ratios, !sweep_no_overlay, *clients.chat);
      std::cout << render_sweep_markdown(rows);
      fs::create_directories(g.out_dir);
      json j = rows;
      write_file((fs::path(g.out_dir) / "sweep.json").string(), j.dump(2) + "\n");
      return 0;
    }

    if (*c_stats) {
      auto a = read_jsonl<EvaluationRecord>(stats_pairs[0]);
      auto b = read_jsonl<EvaluationRecord>(stats_pairs[1]);
      PairLevel level = stats_level == "dataset" ? PairLevel::dataset : PairLevel::item;
      auto [x, y] = pair_records(a, b, level);
      WilcoxonResult w = wilcoxon_signed_rank(x, y);
      std::cout << "| n_eff | W+ | W- | W | p | method |\n|---|---|---|---|---|---|\n| "
                << w.n_effective << " | " << w.w_plus << " | " << w.w_minus << " | " << w.w
                << " | " << w.p_value << " | " << to_string(w.method) << " |\n";
      return 0;
    }

    if (*c_report) {
      auto records = read_jsonl<EvaluationRecord>(report_records);
      if (records.empty()) throw Error(ErrorKind::input, "no records in " + report_records);
      std::map<std::string, std::vector<EvaluationRecord>> by_scenario;
      for (auto& r : records) by_scenario[r.scenario].push_back(std::move(r));
      std::vector<AccuracyReport> reports;
      std::optional<AccuracyReport> baseline;
      if (by_scenario.count(report_baseline))
        baseline = make_report(by_scenario[report_baseline], report_baseline);
      for (auto& [name, group] : by_scenario) {
        AccuracyReport r = make_report(group, name);
        if (baseline && name != report_baseline) r = delta(std::move(r), *baseline);
        reports.push_back(std::move(r));
      }
      auto files = emit_report(reports, parse_report_format(report_format), g.out_dir);
      std::cout << render_markdown(reports);
      for (const auto& f : files) std::cerr << "wrote " << f << "\n";
      return 0;
    }

    throw Error(ErrorKind::config, "no subcommand handled");
  } catch (const Error& e) {
    std::cerr << "noiser: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "noiser: " << e.what() << "\n";
    return 1;
  }
}

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "noiser/clients.hpp"
#include "noiser/core.hpp"
#include "noiser/prompts.hpp"
#include "noiser/stats.hpp"
#include "noiser/testbed.hpp"

namespace noiser {

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct EvaluationRecord {
  std::string item_id;
  std::string scenario;
  std::string dataset;
  std::string raw_text;
  std::optional<char> parsed_option;
  std::optional<std::string> parsed_text;
  bool correct = false;
  double latency_ms = 0.0;
  std::optional<std::string> error;
};

inline void to_json(json& j, const EvaluationRecord& r) {
  j = json{{"item_id", r.item_id},   {"scenario", r.scenario}, {"dataset", r.dataset},
           {"raw_text", r.raw_text}, {"correct", r.correct},   {"latency_ms", r.latency_ms}};
  if (r.parsed_option) j["parsed_option"] = std::string(1, *r.parsed_option);
  if (r.parsed_text) j["parsed_text"] = *r.parsed_text;
  if (r.error) j["error"] = *r.error;
}

inline void from_json(const json& j, EvaluationRecord& r) {
  r.item_id = j.at("item_id").get<std::string>();
  r.scenario = j.value("scenario", std::string());
  r.dataset = j.value("dataset", std::string());
  r.raw_text = j.value("raw_text", std::string());
  r.correct = j.value("correct", false);
  r.latency_ms = j.value("latency_ms", 0.0);
  if (j.contains("parsed_option")) {
    std::string s = j["parsed_option"].get<std::string>();
    if (s.size() == 1) r.parsed_option = s[0];
  }
  if (j.contains("parsed_text")) r.parsed_text = j["parsed_text"].get<std::string>();
  if (j.contains("error")) r.error = j["error"].get<std::string>();
}

// ---------------------------------------------------------------------------
// Choice extraction
// ---------------------------------------------------------------------------

// Extraction order: leading standalone letter, then a uniquely quoted letter,
// then a unique option-text match. Anything else is unparsed. Never returns a
// letter that is not in the option list.
inline std::optional<char> parse_choice(const std::string& response,
                                        std::span<const Option> options) {
  if (options.empty()) throw Error(ErrorKind::input, "no options");
  auto valid = [&](char c) {
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (const auto& o : options)
      if (o.letter == up) return true;
    return false;
  };
  auto upper = [](char c) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  };

  // 1. leading standalone letter, allowing markdown decoration
  static const std::string decor = " \t\r\n*_`#>([\"'";
  std::size_t i = 0;
  while (i < response.size() && decor.find(response[i]) != std::string::npos) ++i;
  if (i < response.size() && std::isalpha(static_cast<unsigned char>(response[i]))) {
    bool boundary = i + 1 == response.size() ||
                    !std::isalnum(static_cast<unsigned char>(response[i + 1]));
    if (boundary && valid(response[i])) return upper(response[i]);
  }

  // 2. quoted letter, unique across the response
  std::set<char> quoted;
  for (std::size_t p = 0; p + 2 < response.size(); ++p) {
    char open = response[p];
    if (open != '\'' && open != '"') continue;
    char mid = response[p + 1];
    char close = response[p + 2];
    if (close == open && std::isalpha(static_cast<unsigned char>(mid)) && valid(mid))
      quoted.insert(upper(mid));
  }
  if (quoted.size() == 1) return *quoted.begin();

  // 3. unique option-text match
  std::string norm = normalize(response);
  std::vector<char> matched;
  for (const auto& o : options) {
    std::string opt_norm = normalize(o.text);
    if (!opt_norm.empty() && norm.find(opt_norm) != std::string::npos)
      matched.push_back(o.letter);
  }
  if (matched.size() == 1) return matched.front();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Evaluation runs
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string records_path;  // persisted incrementally when set
  bool resume = false;
  int max_parallel = 1;
  std::string prompts_dir;
  std::string model;
  int max_tokens = 512;
};

inline std::string render_context(const std::vector<NoiseDocument>& docs) {
  if (docs.empty()) return "(no retrieval results)";
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < docs.size(); ++i)
    lines.push_back("[" + std::to_string(i + 1) + "] " + docs[i].text);
  return join(lines, "\n");
}

inline std::string render_options(std::span<const Option> options) {
  std::vector<std::string> parts;
  for (const auto& o : options)
    parts.push_back("'" + std::string(1, o.letter) + "': " + o.text);
  return join(parts, "  ");
}

inline std::string render_eval_prompt(const TestbedItem& item, const PromptTemplate& tpl) {
  return tpl.render({{"context", render_context(item.documents)},
                     {"question", item.instance.question},
                     {"options", render_options(item.options)}});
}

// One record per item in the scenario, zero-shot, temperature 0. Transport
// failures are recorded per item, not fatal. With a records path the run is
// resume-safe: finished items are loaded and skipped.
inline std::vector<EvaluationRecord> run_eval(const std::vector<TestbedItem>& testbed,
                                              const std::string& scenario_name,
                                              ChatClient& chat, const EvalOptions& opt = {}) {
  PromptLibrary prompts(opt.prompts_dir);
  PromptTemplate tpl = prompts.get("eval");
  PromptTemplate system_tpl = prompts.get("eval_system");

  std::vector<const TestbedItem*> items;
  for (const auto& item : testbed)
    if (scenario_name.empty() || item.scenario.name == scenario_name) items.push_back(&item);
  std::sort(items.begin(), items.end(), [](const TestbedItem* a, const TestbedItem* b) {
    return a->item_id < b->item_id;
  });

  std::map<std::string, EvaluationRecord> done;
  if (opt.resume && !opt.records_path.empty() &&
      std::filesystem::exists(opt.records_path)) {
    for (auto& r : read_jsonl<EvaluationRecord>(opt.records_path)) done[r.item_id] = r;
  }

  std::mutex mu;
  std::ofstream out;
  if (!opt.records_path.empty()) {
    out.open(opt.records_path, opt.resume ? std::ios::binary | std::ios::app
                                          : std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write records " + opt.records_path);
  }

  std::map<std::string, EvaluationRecord> results;
  auto eval_one = [&](const TestbedItem& item) {
    EvaluationRecord rec;
    rec.item_id = item.item_id;
    rec.scenario = item.scenario.name;
    rec.dataset = item.instance.source_dataset;
    ChatRequest req;
    req.system = system_tpl.text;
    req.user = render_eval_prompt(item, tpl);
    req.temperature = 0.0;
    req.max_tokens = opt.max_tokens;
    req.model = opt.model;
    auto start = std::chrono::steady_clock::now();
    try {
      rec.raw_text = chat.chat(req);
      auto parsed = parse_choice(rec.raw_text, item.options);
      if (parsed) {
        rec.parsed_option = *parsed;
        for (const auto& o : item.options)
          if (o.letter == *parsed) rec.parsed_text = o.text;
        rec.correct = *parsed == item.golden_letter;
      }
    } catch (const Error& e) {
      rec.error = e.what();
      rec.correct = false;
    }
    rec.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    std::lock_guard<std::mutex> lock(mu);
    results[rec.item_id] = rec;
    if (out.is_open()) {
      out << json(rec).dump() << "\n";
      out.flush();
    }
  };

  std::vector<const TestbedItem*> todo;
  for (const TestbedItem* item : items) {
    auto it = done.find(item->item_id);
    if (it != done.end())
      results[item->item_id] = it->second;
    else
      todo.push_back(item);
  }

  int workers = std::max(1, opt.max_parallel);
  if (workers == 1 || todo.size() < 2) {
    for (const TestbedItem* item : todo) eval_one(*item);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < todo.size(); i = next++) eval_one(*todo[i]);
      });
    for (auto& t : pool) t.join();
  }

  std::vector<EvaluationRecord> out_records;
  out_records.reserve(results.size());
  for (auto& [id, rec] : results) out_records.push_back(std::move(rec));
  return out_records;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

enum class Denominator { total, answered };

// Percent correct. Unparsed responses count as wrong under the default
// denominator and are excluded under `answered`.
inline double accuracy(std::span<const EvaluationRecord> records,
                       Denominator denom = Denominator::total) {
  if (records.empty()) throw Error(ErrorKind::input, "no records");
  std::size_t correct = 0, answered = 0;
  for (const auto& r : records) {
    if (r.parsed_option) ++answered;
    if (r.correct) ++correct;
  }
  std::size_t d = denom == Denominator::total ? records.size() : answered;
  if (d == 0) return 0.0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(d);
}

inline double weighted_average(std::span<const double> accs, std::span<const double> weights) {
  if (accs.empty()) throw Error(ErrorKind::input, "no accuracies");
  if (accs.size() != weights.size())
    throw Error(ErrorKind::input, "accuracy and weight vectors differ in length");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < accs.size(); ++i) {
    if (weights[i] < 0) throw Error(ErrorKind::input, "negative weight");
    num += accs[i] * weights[i];
    den += weights[i];
  }
  if (den == 0) throw Error(ErrorKind::input, "weights sum to zero");
  return num / den;
}

// Fraction of records whose parsed option text is "Uncertain".
inline double uncertainty_rate(std::span<const EvaluationRecord> records) {
  if (records.empty()) throw Error(ErrorKind::input, "no records");
  std::size_t uncertain = 0;
  for (const auto& r : records)
    if (r.parsed_text && *r.parsed_text == kUncertainOption) ++uncertain;
  return static_cast<double>(uncertain) / static_cast<double>(records.size());
}

struct AccuracyReport {
  std::string scenario;
  std::map<std::string, double> per_dataset;      // accuracy %
  std::map<std::string, std::size_t> weights;     // per-dataset sample counts
  double weighted_avg = 0.0;
  double uncertainty = 0.0;                       // µ
  std::string baseline;                           // set when deltas present
  std::map<std::string, double> deltas;
  std::optional<double> weighted_delta;
};

inline void to_json(json& j, const AccuracyReport& r) {
  j = json{{"scenario", r.scenario},
           {"per_dataset", r.per_dataset},
           {"weights", r.weights},
           {"weighted_average", r.weighted_avg},
           {"uncertainty_rate", r.uncertainty}};
  if (!r.baseline.empty()) {
    j["baseline"] = r.baseline;
    j["deltas"] = r.deltas;
    if (r.weighted_delta) j["weighted_delta"] = *r.weighted_delta;
  }
}

inline AccuracyReport make_report(std::span<const EvaluationRecord> records,
                                  const std::string& scenario_name = {}) {
  if (records.empty()) throw Error(ErrorKind::input, "no records");
  AccuracyReport report;
  report.scenario = scenario_name.empty() ? records.front().scenario : scenario_name;
  std::map<std::string, std::vector<EvaluationRecord>> by_dataset;
  for (const auto& r : records) by_dataset[r.dataset].push_back(r);
  std::vector<double> accs, weights;
  for (const auto& [dataset, group] : by_dataset) {
    double acc = accuracy(group);
    report.per_dataset[dataset] = acc;
    report.weights[dataset] = group.size();
    accs.push_back(acc);
    weights.push_back(static_cast<double>(group.size()));
  }
  report.weighted_avg = weighted_average(accs, weights);
  report.uncertainty = uncertainty_rate(records);
  return report;
}

inline AccuracyReport delta(AccuracyReport report, const AccuracyReport& baseline) {
  report.baseline = baseline.scenario;
  for (const auto& [dataset, acc] : report.per_dataset) {
    auto it = baseline.per_dataset.find(dataset);
    if (it != baseline.per_dataset.end()) report.deltas[dataset] = acc - it->second;
  }
  report.weighted_delta = report.weighted_avg - baseline.weighted_avg;
  return report;
}

// ---------------------------------------------------------------------------
// Prior-noise scoring
// ---------------------------------------------------------------------------

struct PriorEvalOptions {
  std::vector<std::string> flag_phrases{kPriorFlagOption};
  ChatClient* judge = nullptr;  // optional judge mode
};

// Correct iff the response flags the false premise, by normalized phrase
// match or, in judge mode, a FLAGGED verdict. `mode` filters by scenario name
// (Base / Misleading / Background); empty scores everything.
inline double prior_eval(std::span<const EvaluationRecord> records, const std::string& mode = {},
                         const PriorEvalOptions& opt = {}) {
  std::size_t total = 0, correct = 0;
  for (const auto& r : records) {
    if (!mode.empty() && r.scenario != mode) continue;
    ++total;
    bool flagged = false;
    for (const auto& phrase : opt.flag_phrases)
      if (contains_normalized(r.raw_text, phrase)) flagged = true;
    if (!flagged && r.parsed_text && *r.parsed_text == kPriorFlagOption) flagged = true;
    if (!flagged && opt.judge) {
      ChatRequest req;
      req.user = "Does this response state that the question itself is factually "
                 "incorrect or based on a false premise? Reply FLAGGED or ANSWERED.\n"
                 "Response: " + r.raw_text + "\nVerdict:";
      req.max_tokens = 8;
      auto tokens = split_ws(opt.judge->chat(req));
      flagged = !tokens.empty() && normalize(tokens.front()) == "flagged";
    }
    if (flagged) ++correct;
  }
  if (total == 0) throw Error(ErrorKind::input, "no records for mode '" + mode + "'");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Ratio sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  double ratio = 0.0;
  double acc = 0.0;
  std::optional<double> acc_isn;
  std::optional<double> delta;
};

inline void to_json(json& j, const SweepRow& r) {
  j = json{{"ratio", r.ratio}, {"accuracy", r.acc}};
  if (r.acc_isn) j["accuracy_isn"] = *r.acc_isn;
  if (r.delta) j["delta"] = *r.delta;
}

using SweepBuilder = std::function<std::vector<TestbedItem>(double ratio, bool with_isn)>;

// Evaluates the orthographic-ratio grid, optionally overlaying illegal
// sentence noise at each ratio and reporting the gain.
inline std::vector<SweepRow> ratio_sweep(const SweepBuilder& build,
                                         std::span<const double> ratios, bool overlay_isn,
                                         ChatClient& chat, const EvalOptions& opt = {}) {
  if (ratios.empty()) throw Error(ErrorKind::input, "no ratios");
  for (double r : ratios)
    if (r < 0.0 || r > 0.9)
      throw Error(ErrorKind::config,
                  "ratio " + std::to_string(r) + " outside the supported range [0, 0.9]");
  std::vector<SweepRow> rows;
  for (double r : ratios) {
    SweepRow row;
    row.ratio = r;
    auto base_items = build(r, false);
    auto base_records = run_eval(base_items, "", chat, opt);
    row.acc = accuracy(base_records);
    if (overlay_isn) {
      auto isn_items = build(r, true);
      auto isn_records = run_eval(isn_items, "", chat, opt);
      row.acc_isn = accuracy(isn_records);
      row.delta = *row.acc_isn - row.acc;
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class ReportFormat { csv, json_format, markdown, plotdata };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json_format;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "plotdata") return ReportFormat::plotdata;
  throw Error(ErrorKind::config, "unknown report format '" + s + "'");
}

namespace detail {

inline std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::vector<std::string> all_datasets(std::span<const AccuracyReport> reports) {
  std::set<std::string> names;
  for (const auto& r : reports)
    for (const auto& [d, _] : r.per_dataset) names.insert(d);
  return {names.begin(), names.end()};
}

}  // namespace detail

// Scenario x dataset accuracy grid with per-cell deltas against the baseline.
inline std::string render_markdown(std::span<const AccuracyReport> reports) {
  if (reports.empty()) throw Error(ErrorKind::input, "no reports");
  auto datasets = detail::all_datasets(reports);
  std::string out = "| Scenario |";
  for (const auto& d : datasets) out += " " + d + " |";
  out += " Average | Uncertainty |\n|---|";
  for (std::size_t i = 0; i < datasets.size() + 2; ++i) out += "---|";
  out += "\n";
  for (const auto& r : reports) {
    out += "| " + r.scenario + " |";
    for (const auto& d : datasets) {
      auto it = r.per_dataset.find(d);
      if (it == r.per_dataset.end()) {
        out += " - |";
        continue;
      }
      std::string cell = detail::fmt_pct(it->second);
      auto dit = r.deltas.find(d);
      if (dit != r.deltas.end())
        cell += " (" + std::string(dit->second >= 0 ? "+" : "") + detail::fmt_pct(dit->second) + ")";
      out += " " + cell + " |";
    }
    std::string avg = detail::fmt_pct(r.weighted_avg);
    if (r.weighted_delta)
      avg += " (" + std::string(*r.weighted_delta >= 0 ? "+" : "") +
             detail::fmt_pct(*r.weighted_delta) + ")";
    out += " " + avg + " | " + detail::fmt_pct(r.uncertainty * 100.0) + "% |\n";
  }
  return out;
}

inline std::string render_sweep_markdown(std::span<const SweepRow> rows) {
  if (rows.empty()) throw Error(ErrorKind::input, "no sweep rows");
  bool has_isn = rows.front().acc_isn.has_value();
  std::string out = has_isn ? "| Ratio | Accuracy | + ISN | Delta |\n|---|---|---|---|\n"
                            : "| Ratio | Accuracy |\n|---|---|\n";
  for (const auto& r : rows) {
    char ratio[16];
    std::snprintf(ratio, sizeof(ratio), "%.2g", r.ratio);
    out += "| " + std::string(ratio) + " | " + detail::fmt_pct(r.acc) + " |";
    if (has_isn)
      out += " " + detail::fmt_pct(r.acc_isn.value_or(0)) + " | " +
             (r.delta.value_or(0) >= 0 ? "+" : "") + detail::fmt_pct(r.delta.value_or(0)) + " |";
    out += "\n";
  }
  return out;
}

// Writes report files under out_dir and returns their paths.
inline std::vector<std::string> emit_report(std::span<const AccuracyReport> reports,
                                            ReportFormat format, const std::string& out_dir) {
  if (reports.empty()) throw Error(ErrorKind::input, "no reports");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  switch (format) {
    case ReportFormat::markdown: {
      std::string path = (fs::path(out_dir) / "report.md").string();
      write_file(path, render_markdown(reports));
      written.push_back(path);
      break;
    }
    case ReportFormat::json_format: {
      std::string path = (fs::path(out_dir) / "report.json").string();
      json j = json::array();
      for (const auto& r : reports) j.push_back(r);
      write_file(path, j.dump(2) + "\n");
      written.push_back(path);
      break;
    }
    case ReportFormat::csv: {
      std::string path = (fs::path(out_dir) / "report.csv").string();
      std::string out = "scenario,dataset,accuracy,weight,delta\n";
      for (const auto& r : reports) {
        for (const auto& [dataset, acc] : r.per_dataset) {
          auto dit = r.deltas.find(dataset);
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%s,%s,%.10g,%zu,%s\n", r.scenario.c_str(),
                        dataset.c_str(), acc, r.weights.at(dataset),
                        dit == r.deltas.end() ? ""
                                              : detail::fmt_pct(dit->second).c_str());
          out += buf;
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,__weighted_average__,%.10g,%zu,\n",
                      r.scenario.c_str(), r.weighted_avg, std::size_t{0});
        out += buf;
      }
      write_file(path, out);
      written.push_back(path);
      break;
    }
    case ReportFormat::plotdata: {
      fs::path dir = fs::path(out_dir) / "plotdata";
      fs::create_directories(dir);
      for (const auto& dataset : detail::all_datasets(reports)) {
        std::string out;
        for (const auto& r : reports) {
          auto it = r.per_dataset.find(dataset);
          if (it != r.per_dataset.end())
            out += r.scenario + "\t" + detail::fmt_pct(it->second) + "\n";
        }
        std::string path = (dir / ("series_" + dataset + ".tsv")).string();
        write_file(path, out);
        written.push_back(path);
      }
      std::string out;
      for (const auto& r : reports)
        out += r.scenario + "\t" + detail::fmt_pct(r.uncertainty * 100.0) + "\n";
      std::string path = (dir / "uncertainty.tsv").string();
      write_file(path, out);
      written.push_back(path);
      break;
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// Pairing for significance tests
// ---------------------------------------------------------------------------

enum class PairLevel { item, dataset };

inline void to_json(json& j, const WilcoxonResult& r) {
  j = json{{"n_effective", r.n_effective}, {"W_plus", r.w_plus},   {"W_minus", r.w_minus},
           {"W", r.w},                     {"p_value", r.p_value}, {"method", to_string(r.method)}};
}

// Pairs two record sets either per item (0/1 correctness) or per dataset
// (accuracy). Items or datasets present in only one run are skipped.
inline std::pair<std::vector<double>, std::vector<double>> pair_records(
    std::span<const EvaluationRecord> a, std::span<const EvaluationRecord> b, PairLevel level) {
  std::vector<double> x, y;
  if (level == PairLevel::item) {
    std::map<std::string, bool> b_correct;
    for (const auto& r : b) b_correct[r.item_id] = r.correct;
    // scenario names differ between runs; pair on the instance part of the id
    std::map<std::string, bool> b_by_instance;
    for (const auto& r : b)
      b_by_instance[r.item_id.substr(0, r.item_id.find("::"))] = r.correct;
    for (const auto& r : a) {
      auto exact = b_correct.find(r.item_id);
      if (exact != b_correct.end()) {
        x.push_back(r.correct ? 1.0 : 0.0);
        y.push_back(exact->second ? 1.0 : 0.0);
        continue;
      }
      auto inst = b_by_instance.find(r.item_id.substr(0, r.item_id.find("::")));
      if (inst != b_by_instance.end()) {
        x.push_back(r.correct ? 1.0 : 0.0);
        y.push_back(inst->second ? 1.0 : 0.0);
      }
    }
  } else {
    std::map<std::string, std::vector<EvaluationRecord>> ga, gb;
    for (const auto& r : a) ga[r.dataset].push_back(r);
    for (const auto& r : b) gb[r.dataset].push_back(r);
    for (const auto& [dataset, group] : ga) {
      auto it = gb.find(dataset);
      if (it == gb.end()) continue;
      x.push_back(accuracy(group));
      y.push_back(accuracy(it->second));
    }
  }
  if (x.empty()) throw Error(ErrorKind::input, "no overlapping pairs between the two runs");
  return {x, y};
}

}  // namespace noiser

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "noiser/error.hpp"
#include "noiser/text.hpp"

namespace noiser {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enums
// ---------------------------------------------------------------------------

enum class OptionsHint { open, boolean };
enum class Category { single_hop, multi_hop_explicit, multi_hop_implicit, mixed_hop };
enum class NoiseKind {
  golden,
  semantic,
  datatype,
  illegal_sentence,
  counterfactual,
  supportive,
  orthographic,
};

inline const char* to_string(OptionsHint h) {
  return h == OptionsHint::open ? "open" : "boolean";
}

inline const char* to_string(Category c) {
  switch (c) {
    case Category::single_hop: return "single_hop";
    case Category::multi_hop_explicit: return "multi_hop_explicit";
    case Category::multi_hop_implicit: return "multi_hop_implicit";
    case Category::mixed_hop: return "mixed_hop";
  }
  return "single_hop";
}

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::golden: return "golden";
    case NoiseKind::semantic: return "semantic";
    case NoiseKind::datatype: return "datatype";
    case NoiseKind::illegal_sentence: return "illegal_sentence";
    case NoiseKind::counterfactual: return "counterfactual";
    case NoiseKind::supportive: return "supportive";
    case NoiseKind::orthographic: return "orthographic";
  }
  return "golden";
}

// Short labels as used in scenario names ("Golden & ISN").
inline const char* abbrev(NoiseKind k) {
  switch (k) {
    case NoiseKind::golden: return "Golden";
    case NoiseKind::semantic: return "SeN";
    case NoiseKind::datatype: return "DN";
    case NoiseKind::illegal_sentence: return "ISN";
    case NoiseKind::counterfactual: return "CN";
    case NoiseKind::supportive: return "SuN";
    case NoiseKind::orthographic: return "ON";
  }
  return "Golden";
}

template <class E>
E parse_enum(const std::string& s);

template <>
inline OptionsHint parse_enum<OptionsHint>(const std::string& s) {
  if (s == "open") return OptionsHint::open;
  if (s == "boolean") return OptionsHint::boolean;
  throw Error(ErrorKind::parse, "unknown options_hint '" + s + "'");
}

template <>
inline Category parse_enum<Category>(const std::string& s) {
  if (s == "single_hop") return Category::single_hop;
  if (s == "multi_hop_explicit") return Category::multi_hop_explicit;
  if (s == "multi_hop_implicit") return Category::multi_hop_implicit;
  if (s == "mixed_hop") return Category::mixed_hop;
  throw Error(ErrorKind::parse, "unknown category '" + s + "'");
}

template <>
inline NoiseKind parse_enum<NoiseKind>(const std::string& s) {
  if (s == "golden") return NoiseKind::golden;
  if (s == "semantic") return NoiseKind::semantic;
  if (s == "datatype") return NoiseKind::datatype;
  if (s == "illegal_sentence") return NoiseKind::illegal_sentence;
  if (s == "counterfactual") return NoiseKind::counterfactual;
  if (s == "supportive") return NoiseKind::supportive;
  if (s == "orthographic") return NoiseKind::orthographic;
  throw Error(ErrorKind::parse, "unknown noise kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct QAInstance {
  std::string id;
  std::string question;
  std::string gold_answer;
  std::vector<std::string> answer_aliases;
  OptionsHint options_hint = OptionsHint::open;
  Category category = Category::single_hop;
  std::string source_dataset;
  std::optional<std::string> prior_flaw;
  std::map<std::string, std::string> provenance;

  // Throws ErrorKind::input listing all violations; mirror of validate_instance.
  static QAInstance checked(QAInstance inst);
};

struct NoiseDocument {
  std::string doc_id;
  std::string text;
  NoiseKind kind = NoiseKind::golden;
  std::optional<std::string> parent_doc;
  json gen_meta = json::object();
};

struct KindCount {
  NoiseKind kind = NoiseKind::semantic;
  int count = 0;
};

// Position of the golden document in the ordered retrieval list.
struct GoldenPosition {
  std::optional<int> index;  // nullopt means "middle"

  bool is_middle() const { return !index.has_value(); }
  static GoldenPosition middle() { return {}; }
  static GoldenPosition at(int i) { return {i}; }

  int resolve(int total_docs) const {
    return index ? *index : total_docs / 2;
  }
};

struct ScenarioSpec {
  std::string name;
  bool include_golden = true;
  std::vector<KindCount> noise_kinds;
  GoldenPosition golden_position;
  int total_docs = 0;
};

struct Option {
  char letter = 'A';
  std::string text;
};

struct TestbedItem {
  std::string item_id;
  QAInstance instance;
  std::vector<Option> options;
  char golden_letter = 'A';
  ScenarioSpec scenario;
  std::vector<NoiseDocument> documents;
  std::uint64_t seed = 0;

  static TestbedItem checked(TestbedItem item);
};

struct EntailmentResult {
  double p_entail = 0.0;
  double p_neutral = 0.0;
  double p_contradict = 0.0;

  bool valid(double tol = 1e-6) const {
    auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
    return in01(p_entail) && in01(p_neutral) && in01(p_contradict) &&
           std::fabs(p_entail + p_neutral + p_contradict - 1.0) <= tol;
  }
};

inline const std::string kUncertainOption = "Uncertain";

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline std::vector<std::string> validate_instance(const QAInstance& inst) {
  std::vector<std::string> v;
  if (inst.id.empty()) v.push_back("empty_id");
  if (trim(inst.question).empty()) v.push_back("empty_question");
  bool has_gold = !trim(inst.gold_answer).empty();
  if (!has_gold && !inst.prior_flaw) v.push_back("missing_gold_answer");
  if (has_gold) {
    std::string gold_norm = normalize(inst.gold_answer);
    bool found = false;
    for (const auto& a : inst.answer_aliases)
      if (normalize(a) == gold_norm) found = true;
    if (!found) v.push_back("alias_missing_gold");
  }
  return v;
}

inline std::vector<std::string> validate_scenario(const ScenarioSpec& spec) {
  std::vector<std::string> v;
  if (spec.name.empty()) v.push_back("empty_scenario_name");
  if (spec.total_docs < 0) v.push_back("negative_total_docs");
  int sum = spec.include_golden ? 1 : 0;
  for (const auto& kc : spec.noise_kinds) {
    if (kc.count < 0) v.push_back("negative_kind_count");
    if (kc.kind == NoiseKind::golden) v.push_back("golden_listed_as_noise");
    sum += kc.count;
  }
  if (sum != spec.total_docs) v.push_back("scenario_total_mismatch");
  if (spec.include_golden && spec.total_docs > 0) {
    int idx = spec.golden_position.resolve(spec.total_docs);
    if (idx < 0 || idx >= spec.total_docs) v.push_back("golden_position_out_of_range");
  }
  return v;
}

inline std::vector<std::string> validate_testbed_item(const TestbedItem& item) {
  std::vector<std::string> v;
  if (item.item_id.empty()) v.push_back("empty_item_id");
  for (const auto& iv : validate_instance(item.instance)) v.push_back("instance_" + iv);
  for (const auto& sv : validate_scenario(item.scenario)) v.push_back(sv);

  if (item.options.empty()) {
    v.push_back("no_options");
    return v;
  }
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    if (item.options[i].letter != static_cast<char>('A' + i)) {
      v.push_back("letters_not_consecutive");
      break;
    }
  }
  int uncertain = 0;
  bool dup = false;
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    if (item.options[i].text == kUncertainOption) ++uncertain;
    for (std::size_t j = i + 1; j < item.options.size(); ++j)
      if (item.options[i].text == item.options[j].text) dup = true;
  }
  if (uncertain == 0) v.push_back("missing_uncertain");
  if (uncertain > 1) v.push_back("multiple_uncertain");
  if (dup) v.push_back("duplicate_option_text");

  const Option* golden = nullptr;
  for (const auto& o : item.options)
    if (o.letter == item.golden_letter) golden = &o;
  if (!golden) {
    v.push_back("golden_letter_unknown");
  } else if (item.instance.options_hint == OptionsHint::open &&
             !trim(item.instance.gold_answer).empty()) {
    int gold_count = 0;
    for (const auto& o : item.options)
      if (o.text == item.instance.gold_answer) ++gold_count;
    if (gold_count != 1 || golden->text != item.instance.gold_answer)
      v.push_back("golden_text_mismatch");
  }

  if (static_cast<int>(item.documents.size()) != item.scenario.total_docs)
    v.push_back("doc_count_mismatch");
  return v;
}

inline QAInstance QAInstance::checked(QAInstance inst) {
  auto v = validate_instance(inst);
  if (!v.empty()) throw Error(ErrorKind::input, "invalid instance: " + join(v, ", "));
  return inst;
}

inline TestbedItem TestbedItem::checked(TestbedItem item) {
  auto v = validate_testbed_item(item);
  if (!v.empty()) throw Error(ErrorKind::input, "invalid testbed item: " + join(v, ", "));
  return item;
}

// ---------------------------------------------------------------------------
// JSON serialization. Field names match the domain type fields; optional
// fields are omitted when absent.
// ---------------------------------------------------------------------------

inline void to_json(json& j, const QAInstance& inst) {
  j = json{{"id", inst.id},
           {"question", inst.question},
           {"gold_answer", inst.gold_answer},
           {"answer_aliases", inst.answer_aliases},
           {"options_hint", to_string(inst.options_hint)},
           {"category", to_string(inst.category)},
           {"source_dataset", inst.source_dataset}};
  if (inst.prior_flaw) j["prior_flaw"] = *inst.prior_flaw;
  if (!inst.provenance.empty()) j["provenance"] = inst.provenance;
}

inline void from_json(const json& j, QAInstance& inst) {
  inst.id = j.at("id").get<std::string>();
  inst.question = j.at("question").get<std::string>();
  inst.gold_answer = j.value("gold_answer", std::string());
  inst.answer_aliases = j.value("answer_aliases", std::vector<std::string>{});
  inst.options_hint = parse_enum<OptionsHint>(j.value("options_hint", std::string("open")));
  inst.category = parse_enum<Category>(j.value("category", std::string("single_hop")));
  inst.source_dataset = j.value("source_dataset", std::string());
  if (j.contains("prior_flaw") && !j.at("prior_flaw").is_null())
    inst.prior_flaw = j.at("prior_flaw").get<std::string>();
  else
    inst.prior_flaw.reset();
  inst.provenance = j.value("provenance", std::map<std::string, std::string>{});
}

inline void to_json(json& j, const NoiseDocument& doc) {
  j = json{{"doc_id", doc.doc_id}, {"text", doc.text}, {"kind", to_string(doc.kind)}};
  if (doc.parent_doc) j["parent_doc"] = *doc.parent_doc;
  if (!doc.gen_meta.empty()) j["gen_meta"] = doc.gen_meta;
}

inline void from_json(const json& j, NoiseDocument& doc) {
  doc.doc_id = j.at("doc_id").get<std::string>();
  doc.text = j.at("text").get<std::string>();
  doc.kind = parse_enum<NoiseKind>(j.at("kind").get<std::string>());
  if (j.contains("parent_doc") && !j.at("parent_doc").is_null())
    doc.parent_doc = j.at("parent_doc").get<std::string>();
  else
    doc.parent_doc.reset();
  doc.gen_meta = j.value("gen_meta", json::object());
}

inline void to_json(json& j, const KindCount& kc) {
  j = json{{"kind", to_string(kc.kind)}, {"count", kc.count}};
}

inline void from_json(const json& j, KindCount& kc) {
  kc.kind = parse_enum<NoiseKind>(j.at("kind").get<std::string>());
  kc.count = j.at("count").get<int>();
}

inline void to_json(json& j, const ScenarioSpec& s) {
  j = json{{"name", s.name},
           {"include_golden", s.include_golden},
           {"noise_kinds", s.noise_kinds},
           {"total_docs", s.total_docs}};
  if (s.golden_position.is_middle())
    j["golden_position"] = "middle";
  else
    j["golden_position"] = *s.golden_position.index;
}

inline void from_json(const json& j, ScenarioSpec& s) {
  s.name = j.at("name").get<std::string>();
  s.include_golden = j.value("include_golden", true);
  s.noise_kinds = j.value("noise_kinds", std::vector<KindCount>{});
  s.total_docs = j.at("total_docs").get<int>();
  const auto& pos = j.at("golden_position");
  if (pos.is_string()) {
    if (pos.get<std::string>() != "middle")
      throw Error(ErrorKind::parse, "unknown golden_position '" + pos.get<std::string>() + "'");
    s.golden_position = GoldenPosition::middle();
  } else {
    s.golden_position = GoldenPosition::at(pos.get<int>());
  }
}

inline void to_json(json& j, const Option& o) {
  j = json{{"letter", std::string(1, o.letter)}, {"text", o.text}};
}

inline void from_json(const json& j, Option& o) {
  std::string letter = j.at("letter").get<std::string>();
  if (letter.size() != 1) throw Error(ErrorKind::parse, "option letter must be one character");
  o.letter = letter[0];
  o.text = j.at("text").get<std::string>();
}

inline void to_json(json& j, const TestbedItem& item) {
  j = json{{"item_id", item.item_id},
           {"instance", item.instance},
           {"options", item.options},
           {"golden_letter", std::string(1, item.golden_letter)},
           {"scenario", item.scenario},
           {"documents", item.documents},
           {"seed", item.seed}};
}

inline void from_json(const json& j, TestbedItem& item) {
  item.item_id = j.at("item_id").get<std::string>();
  item.instance = j.at("instance").get<QAInstance>();
  item.options = j.at("options").get<std::vector<Option>>();
  std::string letter = j.at("golden_letter").get<std::string>();
  if (letter.size() != 1) throw Error(ErrorKind::parse, "golden_letter must be one character");
  item.golden_letter = letter[0];
  item.scenario = j.at("scenario").get<ScenarioSpec>();
  item.documents = j.at("documents").get<std::vector<NoiseDocument>>();
  item.seed = j.value("seed", std::uint64_t{0});
}

inline void to_json(json& j, const EntailmentResult& r) {
  j = json{{"p_entail", r.p_entail}, {"p_neutral", r.p_neutral}, {"p_contradict", r.p_contradict}};
}

inline void from_json(const json& j, EntailmentResult& r) {
  r.p_entail = j.at("p_entail").get<double>();
  r.p_neutral = j.at("p_neutral").get<double>();
  r.p_contradict = j.at("p_contradict").get<double>();
}

// ---------------------------------------------------------------------------
// JSONL files: one UTF-8 JSON record per line.
// ---------------------------------------------------------------------------

template <class T>
std::vector<T> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorKind::parse,
                  path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <class T>
void write_jsonl(const std::string& path, const std::vector<T>& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  for (const auto& item : items) {
    json j = item;
    out << j.dump() << "\n";
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace noiser

#pragma once

#include <optional>
#include <span>
#include <string>

#include "noiser/clients.hpp"
#include "noiser/core.hpp"
#include "noiser/prompts.hpp"

namespace noiser {

inline constexpr double kEntailmentThreshold = 0.8;

struct GateDecision {
  bool keep = false;
  std::string reason;
  std::optional<double> score;
};

inline void to_json(json& j, const GateDecision& d) {
  j = json{{"keep", d.keep}, {"reason", d.reason}};
  if (d.score) j["score"] = *d.score;
}

// Passes the client's three-way distribution through unchanged.
inline EntailmentResult check_entailment(const std::string& premise,
                                         const std::string& hypothesis, NliClient& nli) {
  if (trim(premise).empty()) throw Error(ErrorKind::input, "empty premise");
  if (trim(hypothesis).empty()) throw Error(ErrorKind::input, "empty hypothesis");
  return nli.nli(premise, hypothesis);
}

inline std::string render_hypothesis(const PromptTemplate& tpl, const std::string& question,
                                     const std::string& answer) {
  return tpl.render({{"question", question}, {"answer", answer}});
}

// Keeps evidence whose entailment probability for the declarative reading of
// the QA pair reaches the threshold. The boundary is inclusive.
inline GateDecision entailment_gate(const std::string& evidence, const QAInstance& inst,
                                    NliClient& nli, double threshold = kEntailmentThreshold,
                                    const PromptTemplate* hypothesis_tpl = nullptr) {
  PromptTemplate default_tpl{"hypothesis", PromptLibrary::builtin("hypothesis")};
  const PromptTemplate& tpl = hypothesis_tpl ? *hypothesis_tpl : default_tpl;
  std::string hypothesis = render_hypothesis(tpl, inst.question, inst.gold_answer);
  EntailmentResult r = check_entailment(evidence, hypothesis, nli);
  GateDecision d;
  d.score = r.p_entail;
  if (r.p_entail >= threshold) {
    d.keep = true;
    d.reason = "entailed";
  } else {
    d.keep = false;
    d.reason = "below entailment threshold";
  }
  return d;
}

// LLM judge for ambiguous or unanswerable questions. Any verdict other than a
// clean KEEP/DROP drops the instance.
inline GateDecision filter_ambiguous(const QAInstance& inst, ChatClient& chat,
                                     const PromptTemplate* judge_tpl = nullptr) {
  PromptTemplate default_tpl{"ambiguity_judge", PromptLibrary::builtin("ambiguity_judge")};
  const PromptTemplate& tpl = judge_tpl ? *judge_tpl : default_tpl;
  ChatRequest req;
  req.user = tpl.render({{"question", inst.question}, {"answer", inst.gold_answer}});
  req.max_tokens = 8;
  std::string response = chat.chat(req);
  auto tokens = split_ws(response);
  std::string verdict = tokens.empty() ? "" : normalize(tokens.front());
  GateDecision d;
  if (verdict == "keep") {
    d.keep = true;
    d.reason = "judge keep";
  } else if (verdict == "drop") {
    d.keep = false;
    d.reason = "judge drop";
  } else {
    d.keep = false;
    d.reason = "unparseable verdict";
  }
  return d;
}

// True iff any normalized alias occurs in the normalized text.
inline bool answer_leak(std::string_view text, std::span<const std::string> aliases) {
  if (aliases.empty()) throw Error(ErrorKind::input, "no aliases to check");
  for (const auto& alias : aliases)
    if (contains_normalized(text, alias)) return true;
  return false;
}

// Append-only JSONL of gate decisions; doubles as the operator review queue.
class ReviewQueue {
 public:
  ReviewQueue() = default;

  explicit ReviewQueue(const std::string& path) : path_(path) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorKind::io, "cannot write review queue " + path);
  }

  void record(const std::string& instance_id, const std::string& stage,
              const GateDecision& d) {
    entries_.push_back({instance_id, stage, d});
    if (out_.is_open()) {
      json j{{"instance_id", instance_id},
             {"stage", stage},
             {"decision", d.keep ? "keep" : "drop"},
             {"reason", d.reason}};
      if (d.score) j["score"] = *d.score;
      out_ << j.dump() << "\n";
      out_.flush();
    }
  }

  struct Entry {
    std::string instance_id;
    std::string stage;
    GateDecision decision;
  };

  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t drops(const std::string& stage) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.stage == stage && !e.decision.keep) ++n;
    return n;
  }

 private:
  std::string path_;
  std::ofstream out_;
  std::vector<Entry> entries_;
};

}  // namespace noiser

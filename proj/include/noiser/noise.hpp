#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "noiser/clients.hpp"
#include "noiser/core.hpp"
#include "noiser/prompts.hpp"
#include "noiser/rng.hpp"
#include "noiser/text.hpp"
#include "noiser/verification.hpp"

namespace noiser {

// ---------------------------------------------------------------------------
// Orthographic noise
// ---------------------------------------------------------------------------

enum class OrthoAction { insert, erase, substitute, swap };

inline const char* to_string(OrthoAction a) {
  switch (a) {
    case OrthoAction::insert: return "insert";
    case OrthoAction::erase: return "delete";
    case OrthoAction::substitute: return "substitute";
    case OrthoAction::swap: return "swap";
  }
  return "insert";
}

inline OrthoAction parse_ortho_action(const std::string& s) {
  if (s == "insert") return OrthoAction::insert;
  if (s == "delete") return OrthoAction::erase;
  if (s == "substitute") return OrthoAction::substitute;
  if (s == "swap") return OrthoAction::swap;
  throw Error(ErrorKind::parse, "unknown orthographic action '" + s + "'");
}

inline const std::string kDefaultOrthoAlphabet =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

struct OrthoConfig {
  double ratio = 0.3;  // target character error rate
  std::vector<OrthoAction> actions{OrthoAction::insert, OrthoAction::erase,
                                   OrthoAction::substitute, OrthoAction::swap};
  std::string alphabet = kDefaultOrthoAlphabet;
  std::uint64_t seed = 0;

  void validate() const {
    if (actions.empty()) throw Error(ErrorKind::config, "ortho actions must be non-empty");
    if (ratio < 0.0 || ratio > 0.9)
      throw Error(ErrorKind::config, "ortho ratio must be in [0, 0.9]");
    bool has_swap =
        std::find(actions.begin(), actions.end(), OrthoAction::swap) != actions.end();
    if (has_swap && ratio > 0.5)
      throw Error(ErrorKind::config, "ratio must be <= 0.5 when swap is enabled");
    bool needs_alphabet =
        std::find(actions.begin(), actions.end(), OrthoAction::insert) != actions.end() ||
        std::find(actions.begin(), actions.end(), OrthoAction::substitute) != actions.end();
    if (needs_alphabet && alphabet.empty())
      throw Error(ErrorKind::config, "alphabet required for insert/substitute");
  }
};

namespace detail {

// Swap scan probability for a target CER. A maximal run of k disjoint
// adjacent transpositions costs k+1 edits, so with per-position swap rate s
// the expected CER is s(2-s)/(1+s); invert and rescale by the fraction of
// swappable (unequal) adjacent pairs in this text.
inline double swap_scan_probability(double target, std::string_view text) {
  if (target <= 0.0) return 0.0;
  double s = ((2.0 - target) - std::sqrt((2.0 - target) * (2.0 - target) - 4.0 * target)) / 2.0;
  std::size_t eq = 0;
  for (std::size_t i = 0; i + 1 < text.size(); ++i)
    if (text[i] == text[i + 1]) ++eq;
  double e = text.size() > 1 ? static_cast<double>(eq) / static_cast<double>(text.size() - 1) : 0.0;
  if (e >= 1.0) return 1.0;
  return std::min(1.0, s / (1.0 - e));
}

}  // namespace detail

// Injects character noise calibrated so that the expected Levenshtein CER over
// seeds matches cfg.ratio. With several actions enabled the target rate is
// split evenly between them. Deterministic for a fixed (text, cfg).
inline std::pair<std::string, double> inject_orthographic(std::string_view text,
                                                          const OrthoConfig& cfg) {
  cfg.validate();
  if (text.empty()) throw Error(ErrorKind::input, "cannot perturb empty text");
  if (cfg.ratio == 0.0) return {std::string(text), 0.0};

  double share = cfg.ratio / static_cast<double>(cfg.actions.size());
  auto enabled = [&](OrthoAction a) {
    return std::find(cfg.actions.begin(), cfg.actions.end(), a) != cfg.actions.end();
  };
  double p_ins = enabled(OrthoAction::insert) ? share : 0.0;
  double p_del = enabled(OrthoAction::erase) ? share : 0.0;
  double p_sub = enabled(OrthoAction::substitute) ? share : 0.0;

  Rng rng(mix_seed(cfg.seed, "ortho"));
  std::string noisy;
  noisy.reserve(text.size() + 8);
  for (char c : text) {
    if (p_ins + p_del + p_sub > 0.0) {
      double u = rng.next_double();
      if (u < p_ins) {
        noisy.push_back(c);
        noisy.push_back(cfg.alphabet[rng.below(cfg.alphabet.size())]);
        continue;
      }
      u -= p_ins;
      if (u < p_del) continue;
      u -= p_del;
      if (u < p_sub) {
        char repl = c;
        while (repl == c && cfg.alphabet.size() > 1)
          repl = cfg.alphabet[rng.below(cfg.alphabet.size())];
        noisy.push_back(repl);
        continue;
      }
    }
    noisy.push_back(c);
  }

  if (enabled(OrthoAction::swap)) {
    double q = detail::swap_scan_probability(share, noisy);
    std::size_t i = 0;
    while (i + 1 < noisy.size()) {
      if (noisy[i] == noisy[i + 1]) {
        ++i;
        continue;
      }
      if (rng.bernoulli(q)) {
        std::swap(noisy[i], noisy[i + 1]);
        i += 2;
      } else {
        ++i;
      }
    }
  }

  double cer = static_cast<double>(levenshtein(text, noisy)) / static_cast<double>(text.size());
  return {std::move(noisy), cer};
}

inline NoiseDocument make_orthographic_noise(const NoiseDocument& source, const OrthoConfig& cfg) {
  auto [noisy, cer] = inject_orthographic(source.text, cfg);
  NoiseDocument doc;
  doc.doc_id = "on-" + source.doc_id + "-" + to_hex(cfg.seed).substr(8);
  doc.text = std::move(noisy);
  doc.kind = NoiseKind::orthographic;
  doc.parent_doc = source.doc_id;
  json actions = json::array();
  for (auto a : cfg.actions) actions.push_back(to_string(a));
  doc.gen_meta =
      json{{"ratio", cfg.ratio}, {"achieved_cer", cer}, {"seed", cfg.seed}, {"actions", actions}};
  return doc;
}

// ---------------------------------------------------------------------------
// Illegal sentence noise
// ---------------------------------------------------------------------------

struct IllegalSentenceConfig {
  std::vector<std::string> vocabulary;
  int words_min = 8;
  int words_max = 15;
  int sentences = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocabulary.empty()) throw Error(ErrorKind::config, "vocabulary must be non-empty");
    if (words_min < 1 || words_max < words_min)
      throw Error(ErrorKind::config, "invalid words-per-sentence range");
    if (sentences < 1) throw Error(ErrorKind::config, "sentences must be >= 1");
  }
};

inline std::vector<std::string> load_wordlist(const std::string& path) {
  std::vector<std::string> words;
  for (const auto& line : split_lines(read_file(path))) {
    std::string w = trim(line);
    if (!w.empty()) words.push_back(w);
  }
  if (words.empty()) throw Error(ErrorKind::config, "wordlist " + path + " is empty");
  return words;
}

// Word salad sampled uniformly from the vocabulary; every emitted token is a
// vocabulary member.
inline NoiseDocument gen_illegal_sentences(const IllegalSentenceConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, "illegal"));
  std::vector<std::string> sentences;
  for (int s = 0; s < cfg.sentences; ++s) {
    int n_words = cfg.words_min +
                  static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.words_max - cfg.words_min + 1)));
    std::vector<std::string> words;
    for (int w = 0; w < n_words; ++w)
      words.push_back(cfg.vocabulary[rng.below(cfg.vocabulary.size())]);
    sentences.push_back(join(words, " "));
  }
  NoiseDocument doc;
  doc.doc_id = "isn-" + to_hex(mix_seed(cfg.seed, "illegal-id")).substr(4);
  doc.text = join(sentences, "\n");
  doc.kind = NoiseKind::illegal_sentence;
  doc.gen_meta = json{{"seed", cfg.seed}, {"sentences", cfg.sentences}};
  return doc;
}

// ---------------------------------------------------------------------------
// Datatype noise
// ---------------------------------------------------------------------------

enum class DatatypeVariant { url, code };

inline const char* to_string(DatatypeVariant v) {
  return v == DatatypeVariant::url ? "url" : "code";
}

inline DatatypeVariant parse_datatype_variant(const std::string& s) {
  if (s == "url") return DatatypeVariant::url;
  if (s == "code") return DatatypeVariant::code;
  throw Error(ErrorKind::parse, "unknown datatype variant '" + s + "'");
}

struct GenOptions {
  int max_attempts = 3;
  std::uint64_t seed = 0;
  double entail_threshold = kEntailmentThreshold;
  const PromptTemplate* prompt = nullptr;
  const PromptTemplate* hypothesis = nullptr;
};

// Rewrites golden evidence to interleave URLs or code while preserving the
// answer strings. Outputs that drop any alias present in the source are
// rejected and retried up to the attempt budget.
inline NoiseDocument make_datatype_noise(const NoiseDocument& evidence, DatatypeVariant variant,
                                         ChatClient& chat, const QAInstance& inst,
                                         const GenOptions& opt = {}, int variant_index = 0) {
  if (evidence.kind != NoiseKind::golden)
    throw Error(ErrorKind::input, "datatype noise requires golden evidence");
  PromptTemplate default_tpl{"datatype", PromptLibrary::builtin("datatype")};
  const PromptTemplate& tpl = opt.prompt ? *opt.prompt : default_tpl;

  std::vector<std::string> must_keep;
  for (const auto& alias : inst.answer_aliases)
    if (contains_normalized(evidence.text, alias)) must_keep.push_back(alias);

  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    ChatRequest req;
    req.user = tpl.render({{"question", inst.question},
                           {"answer", inst.gold_answer},
                           {"evidence", evidence.text},
                           {"variant", to_string(variant)}});
    if (variant_index > 0)
      req.user += "\nWrite variant " + std::to_string(variant_index + 1) + ".";
    if (attempt > 0)
      req.user += "\nAttempt " + std::to_string(attempt + 1) +
                  ": keep the answer string '" + inst.gold_answer + "' verbatim.";
    std::string output = chat.chat(req);
    bool preserved = true;
    for (const auto& alias : must_keep)
      if (!contains_normalized(output, alias)) preserved = false;
    if (!preserved) continue;
    NoiseDocument doc;
    doc.doc_id = "dn-" + evidence.doc_id + "-" + to_string(variant) + "-" +
                 std::to_string(variant_index);
    doc.text = output;
    doc.kind = NoiseKind::datatype;
    doc.parent_doc = evidence.doc_id;
    doc.gen_meta = json{{"variant", to_string(variant)},
                        {"prompt_id", tpl.id},
                        {"attempts", attempt + 1}};
    return doc;
  }
  throw Error(ErrorKind::generation_rejected,
              "datatype rewrite dropped the answer in all " +
                  std::to_string(opt.max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Counterfactual noise and distractors
// ---------------------------------------------------------------------------

struct CounterfactualResult {
  std::string cf_answer;
  NoiseDocument cf_doc;
};

namespace detail {

inline bool matches_alias(const std::string& candidate,
                          const std::vector<std::string>& aliases) {
  std::string norm = normalize(candidate);
  for (const auto& a : aliases)
    if (normalize(a) == norm) return true;
  return false;
}

inline bool has_digit(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

// Candidate wrong answers: entities from search hits, preferring those whose
// rough shape (numeric vs. textual) matches the gold answer, falling back to
// chat-proposed alternatives when search yields nothing usable.
inline std::vector<std::string> counterfactual_candidates(const QAInstance& inst,
                                                          SearchClient& search,
                                                          ChatClient& chat) {
  std::set<std::string> seen;
  std::vector<std::string> preferred, other;
  bool gold_numeric = detail::has_digit(inst.gold_answer);
  for (const auto& hit : search.web_search(inst.gold_answer)) {
    for (const auto& entity : hit.entities) {
      std::string e = trim(entity);
      if (e.empty() || detail::matches_alias(e, inst.answer_aliases)) continue;
      if (!seen.insert(normalize(e)).second) continue;
      (detail::has_digit(e) == gold_numeric ? preferred : other).push_back(e);
    }
  }
  std::sort(preferred.begin(), preferred.end());
  std::sort(other.begin(), other.end());
  std::vector<std::string> candidates = preferred;
  candidates.insert(candidates.end(), other.begin(), other.end());
  if (!candidates.empty()) return candidates;

  ChatRequest req;
  req.user = "Propose 3 plausible but incorrect alternative answers to the question "
             "below, one per line, nothing else.\nQuestion: " + inst.question +
             "\nCorrect answer: " + inst.gold_answer + "\nAlternatives:";
  for (const auto& line : split_lines(chat.chat(req))) {
    std::string e = trim(line);
    if (e.empty() || detail::matches_alias(e, inst.answer_aliases)) continue;
    if (seen.insert(normalize(e)).second) candidates.push_back(e);
  }
  return candidates;
}

// Generates gated counterfactual evidence for one wrong answer. Returns
// nullopt when the entailment gate never passes within the attempt budget.
inline std::optional<NoiseDocument> counterfactual_evidence(const QAInstance& inst,
                                                            const std::string& cf_answer,
                                                            ChatClient& chat, NliClient& nli,
                                                            int variant, const GenOptions& opt) {
  PromptTemplate default_tpl{"counterfactual", PromptLibrary::builtin("counterfactual")};
  const PromptTemplate& tpl = opt.prompt ? *opt.prompt : default_tpl;
  PromptTemplate default_hyp{"hypothesis", PromptLibrary::builtin("hypothesis")};
  const PromptTemplate& hyp = opt.hypothesis ? *opt.hypothesis : default_hyp;

  std::string hypothesis = render_hypothesis(hyp, inst.question, cf_answer);
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    ChatRequest req;
    req.user = tpl.render({{"question", inst.question}, {"answer", cf_answer}});
    if (variant > 0) req.user += "\nWrite variant " + std::to_string(variant + 1) + ".";
    if (attempt > 0)
      req.user += "\nAttempt " + std::to_string(attempt + 1) +
                  ": state the answer '" + cf_answer + "' explicitly.";
    std::string evidence = chat.chat(req);
    EntailmentResult r = check_entailment(evidence, hypothesis, nli);
    if (r.p_entail >= opt.entail_threshold) {
      NoiseDocument doc;
      doc.doc_id = "cn-" + inst.id + "-" + to_hex(fnv1a64(cf_answer)).substr(8) + "-" +
                   std::to_string(variant);
      doc.text = evidence;
      doc.kind = NoiseKind::counterfactual;
      doc.gen_meta = json{{"cf_answer", cf_answer},
                          {"prompt_id", tpl.id},
                          {"p_entail", r.p_entail},
                          {"attempts", attempt + 1}};
      return doc;
    }
  }
  return std::nullopt;
}

// Builds k counterfactual (answer, evidence) pairs with mutually distinct
// answers, none of which normalizes to a gold alias.
inline std::vector<CounterfactualResult> make_counterfactuals(const QAInstance& inst,
                                                              SearchClient& search,
                                                              ChatClient& chat, NliClient& nli,
                                                              std::size_t k,
                                                              const GenOptions& opt = {}) {
  if (inst.options_hint != OptionsHint::open || trim(inst.gold_answer).empty())
    throw Error(ErrorKind::input, "counterfactuals require an open instance with a gold answer");
  std::vector<std::string> candidates = counterfactual_candidates(inst, search, chat);
  if (candidates.empty())
    throw Error(ErrorKind::exhausted_candidates,
                "no candidate answer distinct from the gold aliases for " + inst.id);
  Rng rng(mix_seed(opt.seed, "cf-order", fnv1a64(inst.id)));
  rng.shuffle(candidates);

  std::vector<CounterfactualResult> out;
  std::set<std::string> used;
  for (const auto& candidate : candidates) {
    if (out.size() == k) break;
    if (!used.insert(normalize(candidate)).second) continue;
    auto doc = counterfactual_evidence(inst, candidate, chat, nli, 0, opt);
    if (doc) out.push_back({candidate, std::move(*doc)});
  }
  if (out.size() < k)
    throw Error(ErrorKind::gate_failure,
                "entailment gate passed for only " + std::to_string(out.size()) + " of " +
                    std::to_string(k) + " counterfactuals for " + inst.id);
  return out;
}

inline CounterfactualResult make_counterfactual(const QAInstance& inst, SearchClient& search,
                                                ChatClient& chat, NliClient& nli,
                                                const GenOptions& opt = {}) {
  return make_counterfactuals(inst, search, chat, nli, 1, opt).front();
}

// Two mutually distinct non-gold answers for the MCQ options.
inline std::pair<std::string, std::string> derive_distractors(const QAInstance& inst,
                                                              SearchClient& search,
                                                              ChatClient& chat, NliClient& nli,
                                                              const GenOptions& opt = {}) {
  if (inst.options_hint == OptionsHint::boolean)
    throw Error(ErrorKind::input, "boolean instances need no distractors");
  auto results = make_counterfactuals(inst, search, chat, nli, 2, opt);
  return {results[0].cf_answer, results[1].cf_answer};
}

// Counterfactual for boolean instances: evidence asserting the flipped truth
// value, gated like the open-form path.
inline std::optional<NoiseDocument> boolean_counterfactual(const QAInstance& inst,
                                                           ChatClient& chat, NliClient& nli,
                                                           int variant, const GenOptions& opt) {
  std::string norm = normalize(inst.gold_answer);
  std::string flipped;
  if (norm == "true" || norm == "yes")
    flipped = "False";
  else if (norm == "false" || norm == "no")
    flipped = "True";
  else
    throw Error(ErrorKind::input, "boolean instance with non-boolean gold answer '" +
                                      inst.gold_answer + "'");
  QAInstance cf = inst;
  cf.gold_answer = flipped;
  return counterfactual_evidence(cf, flipped, chat, nli, variant, opt);
}

// ---------------------------------------------------------------------------
// Prior noise
// ---------------------------------------------------------------------------

// Generates a question containing a deliberate false premise from an article
// snippet. The result is flagged for operator review.
inline QAInstance make_prior_instance(std::string_view snippet, ChatClient& chat,
                                      const GenOptions& opt = {}) {
  if (trim(snippet).empty()) throw Error(ErrorKind::input, "empty snippet");
  PromptTemplate default_tpl{"prior", PromptLibrary::builtin("prior")};
  const PromptTemplate& tpl = opt.prompt ? *opt.prompt : default_tpl;
  ChatRequest req;
  req.user = tpl.render({{"snippet", std::string(snippet)}});
  std::string response = chat.chat(req);

  std::string question, flaw, answer;
  for (const auto& line : split_lines(response)) {
    if (line.rfind("QUESTION:", 0) == 0) question = trim(line.substr(9));
    else if (line.rfind("FLAW:", 0) == 0) flaw = trim(line.substr(5));
    else if (line.rfind("ANSWER:", 0) == 0) answer = trim(line.substr(7));
  }
  if (question.empty() || flaw.empty())
    throw Error(ErrorKind::parse,
                "prior generation response missing QUESTION/FLAW fields");

  QAInstance inst;
  inst.id = "prior-" + to_hex(fnv1a64(std::string(snippet))).substr(4);
  inst.question = question;
  inst.gold_answer = answer;
  if (!answer.empty()) inst.answer_aliases.push_back(answer);
  inst.options_hint = OptionsHint::open;
  inst.category = Category::mixed_hop;
  inst.source_dataset = "PriorQA";
  inst.prior_flaw = flaw;
  inst.provenance["review_pending"] = "true";
  return inst;
}

}  // namespace noiser

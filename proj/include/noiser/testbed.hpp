#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "noiser/core.hpp"
#include "noiser/rng.hpp"

namespace noiser {

struct McqResult {
  std::vector<Option> options;
  char golden_letter = 'A';
};

inline const std::string kPriorFlagOption = "The question is factually incorrect";
inline const std::string kPriorAnswerableOption = "The question is answerable as stated";

namespace detail {

inline McqResult shuffled_options(std::vector<std::string> texts, const std::string& golden_text,
                                  std::uint64_t seed) {
  Rng rng(mix_seed(seed, "mcq-shuffle"));
  rng.shuffle(texts);
  McqResult out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    char letter = static_cast<char>('A' + i);
    if (texts[i] == golden_text) out.golden_letter = letter;
    out.options.push_back({letter, std::move(texts[i])});
  }
  return out;
}

}  // namespace detail

// Open instances become {gold, two distractors, "Uncertain"} with a seeded
// uniform shuffle; boolean instances become {True, False, "Uncertain"}.
inline McqResult to_multiple_choice(const QAInstance& inst,
                                    std::span<const std::string> distractors,
                                    std::uint64_t seed) {
  if (inst.options_hint == OptionsHint::boolean) {
    if (!distractors.empty())
      throw Error(ErrorKind::input, "boolean instances take no distractors");
    std::string norm = normalize(inst.gold_answer);
    std::string golden_text;
    if (norm == "true" || norm == "yes")
      golden_text = "True";
    else if (norm == "false" || norm == "no")
      golden_text = "False";
    else
      throw Error(ErrorKind::input,
                  "boolean instance with non-boolean gold answer '" + inst.gold_answer + "'");
    return detail::shuffled_options({"True", "False", kUncertainOption}, golden_text, seed);
  }

  if (distractors.size() != 2)
    throw Error(ErrorKind::input, "open instances need exactly two distractors");
  for (const auto& d : distractors) {
    std::string dn = normalize(d);
    for (const auto& alias : inst.answer_aliases)
      if (normalize(alias) == dn)
        throw Error(ErrorKind::input, "distractor '" + d + "' equals a gold alias");
    if (dn == normalize(kUncertainOption))
      throw Error(ErrorKind::input, "distractor collides with the Uncertain option");
  }
  if (normalize(distractors[0]) == normalize(distractors[1]))
    throw Error(ErrorKind::input, "distractors must be mutually distinct");
  return detail::shuffled_options(
      {inst.gold_answer, distractors[0], distractors[1], kUncertainOption}, inst.gold_answer,
      seed);
}

// Prior-noise instances are scored on premise detection, so their options are
// a fixed verdict triple with the flag option as golden.
inline McqResult to_prior_choice(std::uint64_t seed) {
  return detail::shuffled_options({kPriorFlagOption, kPriorAnswerableOption, kUncertainOption},
                                  kPriorFlagOption, seed);
}

// Draws the scenario's documents: per-kind seeded sampling without
// replacement, combined noise shuffled, golden inserted at its position
// (floor(total/2) for `middle`).
inline std::vector<NoiseDocument> assemble_scenario(
    const ScenarioSpec& spec, const std::map<NoiseKind, std::vector<NoiseDocument>>& pools,
    std::uint64_t seed) {
  auto violations = validate_scenario(spec);
  if (!violations.empty())
    throw Error(ErrorKind::config, "scenario '" + spec.name + "': " + join(violations, ", "));
  if (spec.total_docs == 0) return {};

  Rng rng(mix_seed(seed, "assemble", fnv1a64(spec.name)));
  std::vector<NoiseDocument> noise;
  for (const auto& kc : spec.noise_kinds) {
    if (kc.count == 0) continue;
    auto it = pools.find(kc.kind);
    std::size_t available = it == pools.end() ? 0 : it->second.size();
    if (available < static_cast<std::size_t>(kc.count))
      throw Error(ErrorKind::pool_exhausted,
                  std::string("pool for kind '") + to_string(kc.kind) + "' has " +
                      std::to_string(available) + " documents, scenario '" + spec.name +
                      "' needs " + std::to_string(kc.count));
    auto drawn = rng.sample(it->second, static_cast<std::size_t>(kc.count));
    noise.insert(noise.end(), drawn.begin(), drawn.end());
  }
  rng.shuffle(noise);

  if (!spec.include_golden) return noise;

  auto it = pools.find(NoiseKind::golden);
  if (it == pools.end() || it->second.empty())
    throw Error(ErrorKind::pool_exhausted,
                "pool for kind 'golden' is empty, scenario '" + spec.name + "' needs 1");
  const NoiseDocument& golden = it->second.front();
  int idx = spec.golden_position.resolve(spec.total_docs);
  std::vector<NoiseDocument> out;
  out.reserve(noise.size() + 1);
  out.insert(out.end(), noise.begin(), noise.begin() + idx);
  out.push_back(golden);
  out.insert(out.end(), noise.begin() + idx, noise.end());
  return out;
}

// min(n, |items|) items drawn uniformly without replacement. Items are sorted
// by id first so the draw is independent of input order; output is sorted too.
template <class T, class IdFn>
std::vector<T> sample_dataset(std::vector<T> items, std::size_t n, std::uint64_t seed,
                              IdFn id_of) {
  if (n < 1) throw Error(ErrorKind::input, "sample size must be >= 1");
  std::sort(items.begin(), items.end(),
            [&](const T& a, const T& b) { return id_of(a) < id_of(b); });
  if (items.size() <= n) return items;
  Rng rng(mix_seed(seed, "sample"));
  auto picked = rng.sample(std::move(items), n);
  std::sort(picked.begin(), picked.end(),
            [&](const T& a, const T& b) { return id_of(a) < id_of(b); });
  return picked;
}

inline std::vector<QAInstance> sample_dataset(std::vector<QAInstance> items, std::size_t n,
                                              std::uint64_t seed) {
  return sample_dataset(std::move(items), n, seed,
                        [](const QAInstance& i) -> const std::string& { return i.id; });
}

inline std::vector<TestbedItem> sample_dataset(std::vector<TestbedItem> items, std::size_t n,
                                               std::uint64_t seed) {
  return sample_dataset(std::move(items), n, seed,
                        [](const TestbedItem& i) -> const std::string& { return i.item_id; });
}

// The paper-style scenario grid: no retrieval, golden only, and golden plus
// one noise kind filling the remaining slots.
inline std::vector<ScenarioSpec> default_scenarios(int total_docs = 5) {
  std::vector<ScenarioSpec> out;
  out.push_back({"Base", false, {}, GoldenPosition::middle(), 0});
  out.push_back({"Golden Only", true, {}, GoldenPosition::middle(), 1});
  for (NoiseKind kind : {NoiseKind::counterfactual, NoiseKind::supportive,
                         NoiseKind::orthographic, NoiseKind::semantic, NoiseKind::datatype,
                         NoiseKind::illegal_sentence}) {
    ScenarioSpec s;
    s.name = std::string("Golden & ") + abbrev(kind);
    s.include_golden = true;
    s.noise_kinds = {{kind, total_docs - 1}};
    s.golden_position = GoldenPosition::middle();
    s.total_docs = total_docs;
    out.push_back(std::move(s));
  }
  return out;
}

// Prior-noise protocol: no retrieval, counterfactual content doubling down on
// the flawed premise, and background documents per decomposed entity.
inline std::vector<ScenarioSpec> prior_scenarios(int misleading_docs = 2,
                                                 int background_docs = 4) {
  std::vector<ScenarioSpec> out;
  out.push_back({"Base", false, {}, GoldenPosition::middle(), 0});
  out.push_back({"Misleading", false, {{NoiseKind::counterfactual, misleading_docs}},
                 GoldenPosition::middle(), misleading_docs});
  out.push_back({"Background", false, {{NoiseKind::supportive, background_docs}},
                 GoldenPosition::middle(), background_docs});
  return out;
}

}  // namespace noiser

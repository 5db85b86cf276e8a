#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>
#include <vector>

#include "noiser/clients.hpp"
#include "noiser/noise.hpp"
#include "noiser/rng.hpp"
#include "test_support.hpp"

using namespace noiser;

namespace {

std::string random_text(Rng& rng, std::size_t len) {
  // printable ASCII, '!'..'~'
  std::string s(len, ' ');
  for (auto& c : s) c = static_cast<char>('!' + rng.below(94));
  return s;
}

// Checks that noisy is orig with some set of disjoint adjacent transpositions.
bool reachable_by_disjoint_swaps(const std::string& orig, const std::string& noisy) {
  if (orig.size() != noisy.size()) return false;
  std::size_t i = 0;
  while (i < orig.size()) {
    if (orig[i] == noisy[i]) {
      ++i;
      continue;
    }
    if (i + 1 < orig.size() && noisy[i] == orig[i + 1] && noisy[i + 1] == orig[i]) {
      i += 2;
      continue;
    }
    return false;
  }
  return true;
}

QAInstance date_instance() {
  QAInstance inst;
  inst.id = "bb-01";
  inst.question = "When was the author of The Population Bomb born?";
  inst.gold_answer = "May 29, 1932";
  inst.answer_aliases = {"May 29, 1932"};
  inst.source_dataset = "Bamboogle";
  return inst;
}

NoiseDocument golden_doc(const std::string& text) {
  NoiseDocument d;
  d.doc_id = "g1";
  d.text = text;
  d.kind = NoiseKind::golden;
  return d;
}

}  // namespace

TEST_CASE("ratio zero is the identity") {
  Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    std::string text = random_text(rng, 1 + rng.below(300));
    OrthoConfig cfg;
    cfg.ratio = 0.0;
    cfg.seed = rng.next_u64();
    auto [noisy, cer] = inject_orthographic(text, cfg);
    REQUIRE(noisy == text);
    REQUIRE(cer == 0.0);
  }
}

TEST_CASE("orthographic injection is deterministic") {
  OrthoConfig cfg;
  cfg.ratio = 0.4;
  cfg.seed = 99;
  std::string text = "The quick brown fox jumps over the lazy dog, twice.";
  auto a = inject_orthographic(text, cfg);
  auto b = inject_orthographic(text, cfg);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("swap produces disjoint adjacent transpositions") {
  OrthoConfig cfg;
  cfg.ratio = 0.5;
  cfg.actions = {OrthoAction::swap};
  cfg.seed = 7;
  auto [noisy, cer] = inject_orthographic("abcd", cfg);
  CHECK(reachable_by_disjoint_swaps("abcd", noisy));
  CHECK(cer == Catch::Approx(static_cast<double>(oracle::levenshtein("abcd", noisy)) / 4.0));

  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    std::string text = random_text(rng, 40 + rng.below(200));
    cfg.seed = rng.next_u64();
    auto [out, got_cer] = inject_orthographic(text, cfg);
    REQUIRE(reachable_by_disjoint_swaps(text, out));
    REQUIRE(got_cer ==
            Catch::Approx(static_cast<double>(oracle::levenshtein(text, out)) /
                          static_cast<double>(text.size())));
  }
}

TEST_CASE("substitute calibration near 0.3 over 1000 strings") {
  Rng rng(2024);
  double total = 0;
  for (int i = 0; i < 1000; ++i) {
    std::string text = random_text(rng, 200);
    OrthoConfig cfg;
    cfg.ratio = 0.3;
    cfg.actions = {OrthoAction::substitute};
    cfg.seed = rng.next_u64();
    auto [noisy, _] = inject_orthographic(text, cfg);
    total += static_cast<double>(oracle::levenshtein(text, noisy)) / 200.0;
  }
  double mean = total / 1000.0;
  CHECK(mean > 0.28);
  CHECK(mean < 0.32);
}

TEST_CASE("single-action calibration within 0.02 at r in {0.1, 0.3, 0.5}") {
  Rng rng(555);
  for (OrthoAction action : {OrthoAction::insert, OrthoAction::erase, OrthoAction::substitute,
                             OrthoAction::swap}) {
    for (double ratio : {0.1, 0.3, 0.5}) {
      double total = 0;
      const int seeds = 1000;
      for (int i = 0; i < seeds; ++i) {
        std::string text = random_text(rng, 150);
        OrthoConfig cfg;
        cfg.ratio = ratio;
        cfg.actions = {action};
        cfg.seed = rng.next_u64();
        auto [noisy, _] = inject_orthographic(text, cfg);
        total += static_cast<double>(oracle::levenshtein(text, noisy)) /
                 static_cast<double>(text.size());
      }
      double mean = total / seeds;
      INFO("action=" << to_string(action) << " ratio=" << ratio << " mean=" << mean);
      REQUIRE(std::fabs(mean - ratio) < 0.02);
    }
  }
}

TEST_CASE("achieved cer equals the reported cer") {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    std::string text = random_text(rng, 120);
    OrthoConfig cfg;
    cfg.ratio = 0.35;
    cfg.actions = {OrthoAction::insert, OrthoAction::erase, OrthoAction::substitute};
    cfg.seed = rng.next_u64();
    auto [noisy, cer] = inject_orthographic(text, cfg);
    REQUIRE(cer == Catch::Approx(static_cast<double>(oracle::levenshtein(text, noisy)) /
                                 static_cast<double>(text.size())));
  }
}

TEST_CASE("orthographic config errors") {
  OrthoConfig cfg;
  cfg.ratio = 0.6;
  cfg.actions = {OrthoAction::swap};
  CHECK_THROWS_AS(inject_orthographic("text", cfg), Error);
  try {
    inject_orthographic("text", cfg);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }

  OrthoConfig ok;
  try {
    inject_orthographic("", ok);
    FAIL("expected input error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::input);
  }

  OrthoConfig out_of_range;
  out_of_range.ratio = 0.95;
  out_of_range.actions = {OrthoAction::insert};
  CHECK_THROWS_AS(inject_orthographic("text", out_of_range), Error);
}

TEST_CASE("illegal sentences from a single-word vocabulary") {
  IllegalSentenceConfig cfg;
  cfg.vocabulary = {"a"};
  cfg.words_min = 3;
  cfg.words_max = 3;
  cfg.sentences = 1;
  cfg.seed = 1;
  NoiseDocument doc = gen_illegal_sentences(cfg);
  CHECK(doc.text == "a a a");
  CHECK(doc.kind == NoiseKind::illegal_sentence);
}

TEST_CASE("illegal sentences are deterministic and stay in vocabulary") {
  IllegalSentenceConfig cfg;
  for (int i = 0; i < 50; ++i) cfg.vocabulary.push_back("w" + std::to_string(i));
  cfg.seed = 1;
  NoiseDocument a = gen_illegal_sentences(cfg);
  NoiseDocument b = gen_illegal_sentences(cfg);
  CHECK(a.text == b.text);
  CHECK(a.doc_id == b.doc_id);

  cfg.words_min = cfg.words_max = 7;
  cfg.sentences = 2;
  cfg.seed = 99;
  NoiseDocument doc = gen_illegal_sentences(cfg);
  std::set<std::string> vocab(cfg.vocabulary.begin(), cfg.vocabulary.end());
  auto tokens = split_ws(doc.text);
  REQUIRE(tokens.size() == 14);
  for (const auto& t : tokens) REQUIRE(vocab.count(t) == 1);
}

TEST_CASE("illegal sentence config errors") {
  IllegalSentenceConfig cfg;
  CHECK_THROWS_AS(gen_illegal_sentences(cfg), Error);
  cfg.vocabulary = {"a"};
  cfg.words_min = 5;
  cfg.words_max = 2;
  CHECK_THROWS_AS(gen_illegal_sentences(cfg), Error);
}

TEST_CASE("datatype noise keeps the answer and adds the variant content") {
  QAInstance inst = date_instance();
  NoiseDocument evidence =
      golden_doc("The author of The Population Bomb, Paul Ehrlich, was born on May 29, 1932.");

  SECTION("echoing mock passes the preserve check") {
    MockChatClient chat([&](const ChatRequest& req) {
      std::string ev = req.user.substr(req.user.find("Evidence: ") + 10);
      ev = ev.substr(0, ev.find('\n'));
      return ev + " See https://example.org for details.";
    });
    NoiseDocument doc = make_datatype_noise(evidence, DatatypeVariant::url, chat, inst);
    CHECK(doc.kind == NoiseKind::datatype);
    CHECK(contains_normalized(doc.text, "May 29, 1932"));
    CHECK(doc.text.find("https://example.org") != std::string::npos);
    CHECK(doc.parent_doc == evidence.doc_id);
  }

  SECTION("mock dropping the answer is rejected after the attempt budget") {
    MockChatClient chat([](const ChatRequest&) {
      return std::string("Completely unrelated output. https://nowhere.example");
    });
    try {
      make_datatype_noise(evidence, DatatypeVariant::url, chat, inst);
      FAIL("expected generation-rejected");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::generation_rejected);
    }
    CHECK(chat.calls() == 3);
  }

  SECTION("default mock with the builtin template carries a url or code block") {
    MockChatClient chat;
    NoiseDocument url_doc = make_datatype_noise(evidence, DatatypeVariant::url, chat, inst);
    CHECK(url_doc.text.find("http") != std::string::npos);
    NoiseDocument code_doc = make_datatype_noise(evidence, DatatypeVariant::code, chat, inst);
    CHECK(code_doc.text.find("```") != std::string::npos);
    CHECK(contains_normalized(code_doc.text, "May 29, 1932"));
  }

  SECTION("non-golden evidence is rejected") {
    NoiseDocument bad = evidence;
    bad.kind = NoiseKind::supportive;
    MockChatClient chat;
    CHECK_THROWS_AS(make_datatype_noise(bad, DatatypeVariant::url, chat, inst), Error);
  }
}

TEST_CASE("counterfactual generation from a search candidate pool") {
  QAInstance inst = date_instance();
  MockSearchClient search([](const std::string&) {
    SearchHit hit;
    hit.title = "birthdays";
    hit.entities = {"June 14, 1931", "April 22, 1934", "May 29, 1932"};
    return std::vector<SearchHit>{hit};
  });
  MockChatClient chat;
  MockNliClient nli;
  auto [cf_answer, cf_doc] = make_counterfactual(inst, search, chat, nli);
  CHECK((cf_answer == "June 14, 1931" || cf_answer == "April 22, 1934"));
  CHECK(normalize(cf_answer) != normalize(inst.gold_answer));
  CHECK(cf_doc.kind == NoiseKind::counterfactual);
  CHECK(contains_normalized(cf_doc.text, cf_answer));
  CHECK(cf_doc.gen_meta.at("p_entail").get<double>() >= 0.8);
}

TEST_CASE("counterfactual outputs never equal a gold alias") {
  Rng rng(3);
  MockChatClient chat;
  MockNliClient nli;
  MockSearchClient search;
  for (int i = 0; i < 30; ++i) {
    QAInstance inst = date_instance();
    inst.id = "i" + std::to_string(i);
    inst.gold_answer = "Entity " + std::to_string(rng.below(50));
    inst.answer_aliases = {inst.gold_answer};
    auto results = make_counterfactuals(inst, search, chat, nli, 2);
    for (const auto& r : results) {
      for (const auto& alias : inst.answer_aliases)
        REQUIRE(normalize(r.cf_answer) != normalize(alias));
    }
    REQUIRE(normalize(results[0].cf_answer) != normalize(results[1].cf_answer));
  }
}

TEST_CASE("alias-only candidate pool exhausts") {
  QAInstance inst = date_instance();
  MockSearchClient search([&](const std::string&) {
    SearchHit hit;
    hit.entities = {"May 29, 1932", "may 29 1932"};
    return std::vector<SearchHit>{hit};
  });
  MockChatClient chat([&](const ChatRequest&) { return inst.gold_answer + "\n"; });
  MockNliClient nli;
  try {
    make_counterfactual(inst, search, chat, nli);
    FAIL("expected exhausted-candidates");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::exhausted_candidates);
  }
}

TEST_CASE("entailment gate failures surface as gate-failure") {
  QAInstance inst = date_instance();
  MockSearchClient search;
  MockChatClient chat;
  MockNliClient nli([](const std::string&, const std::string&) {
    return EntailmentResult{0.1, 0.8, 0.1};
  });
  try {
    make_counterfactual(inst, search, chat, nli);
    FAIL("expected gate-failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::gate_failure);
  }
}

TEST_CASE("distractors reproduce the two-candidate pool deterministically") {
  QAInstance inst;
  inst.id = "bb-02";
  inst.question = "Who built the fastest air-breathing manned aircraft?";
  inst.gold_answer = "Lockheed Corporation";
  inst.answer_aliases = {"Lockheed Corporation", "Lockheed"};
  inst.source_dataset = "Bamboogle";
  MockSearchClient search([](const std::string&) {
    SearchHit hit;
    hit.entities = {"Boeing Corporation", "Northrop Corporation", "Lockheed"};
    return std::vector<SearchHit>{hit};
  });
  MockChatClient chat;
  MockNliClient nli;
  auto [d1, d2] = derive_distractors(inst, search, chat, nli);
  std::set<std::string> got{d1, d2};
  std::set<std::string> want{"Boeing Corporation", "Northrop Corporation"};
  CHECK(got == want);
  auto again = derive_distractors(inst, search, chat, nli);
  CHECK(again.first == d1);
  CHECK(again.second == d2);
}

TEST_CASE("boolean instances take no distractors") {
  QAInstance inst;
  inst.id = "sq-1";
  inst.question = "Can 200 men end to end cover Great Pyramid of Giza's base?";
  inst.gold_answer = "False";
  inst.answer_aliases = {"False"};
  inst.options_hint = OptionsHint::boolean;
  MockSearchClient search;
  MockChatClient chat;
  MockNliClient nli;
  try {
    derive_distractors(inst, search, chat, nli);
    FAIL("expected input error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::input);
  }
}

TEST_CASE("prior instance generation parses the fielded response") {
  MockChatClient chat([](const ChatRequest&) {
    return std::string(
        "QUESTION: Who was the CEO of Google when they were restructured into Alphabet "
        "in 2017?\n"
        "FLAW: the restructuring occurred in 2015, not 2017\n"
        "ANSWER: Sundar Pichai\n");
  });
  QAInstance inst = make_prior_instance(
      "In 2015 Google reorganized itself under a new holding company named Alphabet.", chat);
  CHECK(inst.prior_flaw.has_value());
  CHECK(contains_normalized(*inst.prior_flaw, "2015"));
  CHECK(inst.question.find("2017") != std::string::npos);
  CHECK(inst.category == Category::mixed_hop);
  CHECK(inst.provenance.at("review_pending") == "true");
  CHECK(validate_instance(inst).empty());
}

TEST_CASE("prior generation errors") {
  MockChatClient chat;
  CHECK_THROWS_AS(make_prior_instance("", chat), Error);
  MockChatClient bad([](const ChatRequest&) { return std::string("no fields here"); });
  try {
    make_prior_instance("some snippet", bad);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
  }
}

TEST_CASE("replaying a recorded transcript reproduces documents byte for byte") {
  QAInstance inst = date_instance();
  NoiseDocument evidence =
      golden_doc("Paul Ehrlich, author of The Population Bomb, was born on May 29, 1932.");
  std::string path = "test_noise_transcript.jsonl";
  NoiseDocument first;
  {
    ClientBundle live = with_recording(make_mock_bundle(), path);
    first = make_datatype_noise(evidence, DatatypeVariant::url, *live.chat, inst);
  }
  ClientBundle replay = make_replay_bundle(path);
  NoiseDocument second = make_datatype_noise(evidence, DatatypeVariant::url, *replay.chat, inst);
  CHECK(json(first) == json(second));
  std::remove(path.c_str());
}

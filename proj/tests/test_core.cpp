#include <catch2/catch_amalgamated.hpp>

#include "noiser/core.hpp"
#include "noiser/rng.hpp"
#include "noiser/testbed.hpp"

using namespace noiser;

namespace {

QAInstance open_instance() {
  QAInstance inst;
  inst.id = "nq-001";
  inst.question = "When was the author of The Population Bomb born?";
  inst.gold_answer = "May 29, 1932";
  inst.answer_aliases = {"May 29, 1932", "29 May 1932"};
  inst.options_hint = OptionsHint::open;
  inst.category = Category::single_hop;
  inst.source_dataset = "NQ";
  return inst;
}

TestbedItem sample_item() {
  TestbedItem item;
  item.item_id = "nq-001::Golden Only";
  item.instance = open_instance();
  item.options = {{'A', "June 14, 1931"},
                  {'B', "Uncertain"},
                  {'C', "May 29, 1932"},
                  {'D', "April 22, 1934"}};
  item.golden_letter = 'C';
  item.scenario = ScenarioSpec{"Golden Only", true, {}, GoldenPosition::middle(), 1};
  NoiseDocument golden;
  golden.doc_id = "g1";
  golden.text = "Paul Ehrlich was born on May 29, 1932.";
  golden.kind = NoiseKind::golden;
  item.documents = {golden};
  item.seed = 7;
  return item;
}

QAInstance random_instance(Rng& rng) {
  auto word = [&rng]() {
    static const char* words[] = {"alpha", "beta", "Gamma", "DELTA-9", "épsilon", "zeta"};
    return std::string(words[rng.below(6)]);
  };
  QAInstance inst;
  inst.id = "inst-" + std::to_string(rng.below(1000000));
  inst.question = word() + " " + word() + "?";
  inst.gold_answer = word() + " " + std::to_string(rng.below(100));
  inst.answer_aliases = {inst.gold_answer};
  if (rng.bernoulli(0.5)) inst.answer_aliases.push_back(word());
  inst.options_hint = rng.bernoulli(0.2) ? OptionsHint::boolean : OptionsHint::open;
  if (inst.options_hint == OptionsHint::boolean) {
    inst.gold_answer = rng.bernoulli(0.5) ? "True" : "False";
    inst.answer_aliases = {inst.gold_answer};
  }
  inst.category = static_cast<Category>(rng.below(4));
  inst.source_dataset = word();
  if (rng.bernoulli(0.25)) inst.prior_flaw = "premise wrong about " + word();
  if (rng.bernoulli(0.25)) inst.provenance["review_pending"] = "true";
  return inst;
}

}  // namespace

TEST_CASE("validate_instance spec cases") {
  CHECK(validate_instance(open_instance()).empty());

  QAInstance no_gold = open_instance();
  no_gold.gold_answer = "";
  no_gold.answer_aliases = {};
  no_gold.prior_flaw.reset();
  auto v = validate_instance(no_gold);
  CHECK(std::find(v.begin(), v.end(), "missing_gold_answer") != v.end());

  QAInstance bad_alias = open_instance();
  bad_alias.answer_aliases = {"some other string"};
  v = validate_instance(bad_alias);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == "alias_missing_gold");

  QAInstance prior = open_instance();
  prior.gold_answer = "";
  prior.answer_aliases = {};
  prior.prior_flaw = "the premise is wrong";
  CHECK(validate_instance(prior).empty());
}

TEST_CASE("alias membership is checked after normalization") {
  QAInstance inst = open_instance();
  inst.answer_aliases = {"may 29, 1932!"};
  CHECK(validate_instance(inst).empty());
}

TEST_CASE("validate_testbed_item spec cases") {
  CHECK(validate_testbed_item(sample_item()).empty());

  SECTION("missing Uncertain") {
    TestbedItem item = sample_item();
    item.options[1].text = "March 3, 1930";
    auto v = validate_testbed_item(item);
    CHECK(std::find(v.begin(), v.end(), "missing_uncertain") != v.end());
  }
  SECTION("doc count mismatch") {
    TestbedItem item = sample_item();
    item.scenario = ScenarioSpec{"Golden & ISN",
                                 true,
                                 {{NoiseKind::illegal_sentence, 4}},
                                 GoldenPosition::middle(),
                                 5};
    // six documents against total_docs = 5
    NoiseDocument d;
    d.kind = NoiseKind::illegal_sentence;
    d.text = "junk";
    for (int i = 0; i < 6; ++i) {
      d.doc_id = "isn-" + std::to_string(i);
      item.documents.push_back(d);
    }
    item.documents.erase(item.documents.begin());
    auto v = validate_testbed_item(item);
    CHECK(std::find(v.begin(), v.end(), "doc_count_mismatch") != v.end());
  }
  SECTION("duplicate option text") {
    TestbedItem item = sample_item();
    item.options[0].text = "May 29, 1932";
    auto v = validate_testbed_item(item);
    CHECK(std::find(v.begin(), v.end(), "duplicate_option_text") != v.end());
  }
  SECTION("letters must be consecutive from A") {
    TestbedItem item = sample_item();
    item.options[3].letter = 'E';
    auto v = validate_testbed_item(item);
    CHECK(std::find(v.begin(), v.end(), "letters_not_consecutive") != v.end());
  }
  SECTION("golden letter must name the gold text") {
    TestbedItem item = sample_item();
    item.golden_letter = 'A';
    auto v = validate_testbed_item(item);
    CHECK(std::find(v.begin(), v.end(), "golden_text_mismatch") != v.end());
  }
}

TEST_CASE("serialize-parse round-trip is identity") {
  Rng rng(20240811);
  for (int i = 0; i < 200; ++i) {
    QAInstance inst = random_instance(rng);
    json j = inst;
    auto back = j.get<QAInstance>();
    CHECK(json(back) == j);
  }
  TestbedItem item = sample_item();
  json j = item;
  CHECK(json(j.get<TestbedItem>()) == j);
}

TEST_CASE("checked constructors agree with validate") {
  Rng rng(99);
  int threw = 0, clean = 0;
  for (int i = 0; i < 300; ++i) {
    QAInstance inst = random_instance(rng);
    if (rng.bernoulli(0.3)) inst.answer_aliases.clear();
    if (rng.bernoulli(0.1)) inst.id.clear();
    bool valid = validate_instance(inst).empty();
    bool ctor_ok = true;
    try {
      QAInstance::checked(inst);
    } catch (const Error& e) {
      ctor_ok = false;
      CHECK(e.kind() == ErrorKind::input);
    }
    CHECK(valid == ctor_ok);
    (valid ? clean : threw)++;
  }
  CHECK(threw > 10);
  CHECK(clean > 10);
}

TEST_CASE("jsonl io round-trips and reports bad lines") {
  std::string path = "test_core_items.jsonl";
  std::vector<QAInstance> instances;
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    auto inst = random_instance(rng);
    inst.id = "id-" + std::to_string(i);
    instances.push_back(inst);
  }
  write_jsonl(path, instances);
  auto loaded = read_jsonl<QAInstance>(path);
  REQUIRE(loaded.size() == instances.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) CHECK(json(loaded[i]) == json(instances[i]));

  write_file(path, "{\"id\": \"a\", \"question\": \"q\"}\nnot json\n");
  try {
    read_jsonl<QAInstance>(path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("normalization rules") {
  CHECK(normalize("PARIS!") == "paris");
  CHECK(normalize("  The   Answer,  is: 42 ") == "the answer is 42");
  CHECK(normalize("") == "");
  CHECK(contains_normalized("The capital is Paris.", "PARIS"));
  CHECK_FALSE(contains_normalized("The capital is Lyon.", "Paris"));
}

TEST_CASE("golden position resolves middle as floor(total/2)") {
  for (int total = 1; total <= 9; ++total)
    CHECK(GoldenPosition::middle().resolve(total) == total / 2);
  CHECK(GoldenPosition::at(3).resolve(9) == 3);
}

TEST_CASE("scenario totals must be consistent") {
  ScenarioSpec s{"Golden & ISN", true, {{NoiseKind::illegal_sentence, 4}},
                 GoldenPosition::middle(), 5};
  CHECK(validate_scenario(s).empty());
  s.total_docs = 6;
  auto v = validate_scenario(s);
  CHECK(std::find(v.begin(), v.end(), "scenario_total_mismatch") != v.end());
}

TEST_CASE("entailment result validity") {
  EntailmentResult ok{0.8, 0.15, 0.05};
  CHECK(ok.valid());
  EntailmentResult bad{0.9, 0.5, 0.1};
  CHECK_FALSE(bad.valid());
  EntailmentResult off{1.2, -0.1, -0.1};
  CHECK_FALSE(off.valid());
}

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "noiser/core.hpp"

namespace noiser {

// UTF-8 text template with {name} placeholders. Only placeholders present in
// the variable map are substituted; other brace pairs are left untouched.
struct PromptTemplate {
  std::string id;
  std::string text;

  std::string render(const std::map<std::string, std::string>& vars) const {
    std::string out = text;
    for (const auto& [key, value] : vars) {
      std::string needle = "{" + key + "}";
      std::size_t pos = 0;
      while ((pos = out.find(needle, pos)) != std::string::npos) {
        out.replace(pos, needle.size(), value);
        pos += value.size();
      }
    }
    return out;
  }

  static PromptTemplate load(const std::string& path) {
    PromptTemplate t;
    t.id = std::filesystem::path(path).stem().string();
    t.text = read_file(path);
    return t;
  }
};

// Built-in templates, used when no template directory is configured. A file
// named "<id>.txt" in the template directory overrides the built-in text.
class PromptLibrary {
 public:
  PromptLibrary() = default;

  explicit PromptLibrary(std::string dir) : dir_(std::move(dir)) {}

  PromptTemplate get(const std::string& id) const {
    if (!dir_.empty()) {
      std::filesystem::path p = std::filesystem::path(dir_) / (id + ".txt");
      if (std::filesystem::exists(p)) return PromptTemplate::load(p.string());
    }
    PromptTemplate t;
    t.id = id;
    t.text = builtin(id);
    return t;
  }

  static std::string builtin(const std::string& id) {
    if (id == "counterfactual") {
      return "You write short evidence passages for quiz construction.\n"
             "Write a fluent two-sentence passage that plainly states the given answer "
             "to the question, as if it were established fact. Do not hedge, do not "
             "mention the question, and do not state any other candidate answer.\n"
             "\n"
             "Example:\n"
             "Question: Who built the fastest air-breathing manned aircraft?\n"
             "Counterfactual answer: Northrop Corporation\n"
             "Evidence: Northrop Corporation built the fastest air-breathing manned "
             "aircraft, the Northrop Grumman B-2 Spirit. Known for its stealth "
             "technology and high-speed capabilities, it represents a pinnacle in "
             "modern aviation technology.\n"
             "\n"
             "Question: {question}\n"
             "Counterfactual answer: {answer}\n"
             "Evidence:";
    }
    if (id == "supportive") {
      return "You write short evidence passages for quiz construction.\n"
             "Write a fluent passage that is highly relevant to the question's topic "
             "but does not contain the answer itself.\n"
             "\n"
             "Example:\n"
             "Question: When was the author of The Population Bomb born?\n"
             "Passage: The Population Bomb is a best-selling book about population "
             "growth, first published in 1968. It warned of widespread famine and "
             "advocated immediate action to limit population growth.\n"
             "\n"
             "Question: {question}\n"
             "Passage:";
    }
    if (id == "datatype") {
      return "You rewrite evidence passages for quiz construction.\n"
             "Rewrite the evidence so that it mixes in {variant} content, while "
             "preserving every key fact, especially the answer string '{answer}' "
             "verbatim. For 'url', weave one or two plausible web links into the "
             "text. For 'code', append a short fenced code block that references "
             "the facts.\n"
             "\n"
             "Question: {question}\n"
             "Answer: {answer}\n"
             "Evidence: {evidence}\n"
             "Rewritten:";
    }
    if (id == "prior") {
      return "You construct quiz questions that contain a deliberate false premise.\n"
             "Given the article snippet, produce a question whose wording asserts a "
             "fact that contradicts the snippet, plus the description of the flaw.\n"
             "Respond in exactly this fielded format:\n"
             "QUESTION: <question containing the false premise>\n"
             "FLAW: <what the premise gets wrong>\n"
             "ANSWER: <the true fact, or empty>\n"
             "\n"
             "Snippet: {snippet}\n";
    }
    if (id == "ambiguity_judge") {
      return "You screen quiz questions. Answer KEEP if the question has a single, "
             "stable, verifiable answer. Answer DROP if it is ambiguous, opinion "
             "based, time varying, or has broad potential answers. Reply with one "
             "word, KEEP or DROP.\n"
             "\n"
             "Question: {question}\n"
             "Answer: {answer}\n"
             "Verdict:";
    }
    if (id == "hypothesis") {
      return "The answer to {question} is {answer}.";
    }
    if (id == "eval") {
      return "Answer the multiple-choice question using the information provided. "
             "Reply with the letter of the correct option on the first line, then "
             "an explanation.\n"
             "\n"
             "Information:\n"
             "{context}\n"
             "Question: {question}\n"
             "{options}\n"
             "The correct answer is:";
    }
    if (id == "eval_system") {
      return "You are a careful assistant that answers multiple-choice questions.";
    }
    throw Error(ErrorKind::config, "unknown prompt template '" + id + "'");
  }

 private:
  std::string dir_;
};

}  // namespace noiser

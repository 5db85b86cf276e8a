#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "noiser/core.hpp"
#include "noiser/rng.hpp"

namespace noiser {

// ---------------------------------------------------------------------------
// Requests and policy
// ---------------------------------------------------------------------------

struct ChatRequest {
  std::string system;
  std::string user;
  double temperature = 0.0;  // 0 for reproducibility
  int max_tokens = 512;
  std::string model;
};

struct SearchHit {
  std::string title;
  std::string snippet;
  std::vector<std::string> entities;
};

inline void to_json(json& j, const SearchHit& h) {
  j = json{{"title", h.title}, {"snippet", h.snippet}, {"entities", h.entities}};
}

inline void from_json(const json& j, SearchHit& h) {
  h.title = j.value("title", std::string());
  h.snippet = j.value("snippet", std::string());
  h.entities = j.value("entities", std::vector<std::string>{});
}

struct ClientPolicy {
  int max_retries = 3;
  std::chrono::milliseconds backoff_initial{200};
  std::chrono::milliseconds backoff_max{5000};
  std::chrono::milliseconds timeout{30000};
  int max_in_flight = 4;

  void validate() const {
    if (max_in_flight < 1) throw Error(ErrorKind::config, "max_in_flight must be >= 1");
    if (timeout.count() <= 0) throw Error(ErrorKind::config, "timeout must be positive");
    if (max_retries < 0) throw Error(ErrorKind::config, "max_retries must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Client interfaces
// ---------------------------------------------------------------------------

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string chat(const ChatRequest& req) = 0;
};

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

class NliClient {
 public:
  virtual ~NliClient() = default;
  virtual EntailmentResult nli(const std::string& premise, const std::string& hypothesis) = 0;
};

class SearchClient {
 public:
  virtual ~SearchClient() = default;
  virtual std::vector<SearchHit> web_search(const std::string& query) = 0;
};

// ---------------------------------------------------------------------------
// Canonical request hashing and the transcript log
// ---------------------------------------------------------------------------

inline std::string chat_request_key(const ChatRequest& req) {
  json j{{"endpoint", "chat"},      {"system", req.system},
         {"user", req.user},        {"temperature", req.temperature},
         {"max_tokens", req.max_tokens}, {"model", req.model}};
  return to_hex(fnv1a64(j.dump()));
}

inline std::string embed_request_key(const std::vector<std::string>& texts) {
  json j{{"endpoint", "embed"}, {"texts", texts}};
  return to_hex(fnv1a64(j.dump()));
}

inline std::string nli_request_key(const std::string& premise, const std::string& hypothesis) {
  json j{{"endpoint", "nli"}, {"premise", premise}, {"hypothesis", hypothesis}};
  return to_hex(fnv1a64(j.dump()));
}

inline std::string search_request_key(const std::string& query) {
  json j{{"endpoint", "search"}, {"query", query}};
  return to_hex(fnv1a64(j.dump()));
}

// Append-only log of client responses, JSONL of (request_hash, endpoint,
// response). A loaded transcript answers requests by hash in replay mode.
class Transcript {
 public:
  Transcript() = default;

  static std::shared_ptr<Transcript> open_for_record(const std::string& path) {
    auto t = std::make_shared<Transcript>();
    t->path_ = path;
    t->out_.open(path, std::ios::binary | std::ios::trunc);
    if (!t->out_) throw Error(ErrorKind::io, "cannot write transcript " + path);
    return t;
  }

  static std::shared_ptr<Transcript> load(const std::string& path) {
    auto t = std::make_shared<Transcript>();
    t->path_ = path;
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open transcript " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const std::exception& e) {
        throw Error(ErrorKind::parse,
                    path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      std::string hash = j.at("request_hash").get<std::string>();
      t->entries_.emplace(hash, j.at("response").get<std::string>());
      t->hash_ = fnv1a64(line, t->hash_);
    }
    return t;
  }

  void append(const std::string& endpoint, const std::string& request_hash,
              const std::string& response) {
    std::lock_guard<std::mutex> lock(mu_);
    entries_.emplace(request_hash, response);
    json j{{"request_hash", request_hash}, {"endpoint", endpoint}, {"response", response}};
    std::string line = j.dump();
    hash_ = fnv1a64(line, hash_);
    if (out_) {
      out_ << line << "\n";
      out_.flush();
    }
  }

  std::optional<std::string> find(const std::string& request_hash) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(request_hash);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  std::uint64_t content_hash() const {
    std::lock_guard<std::mutex> lock(mu_);
    return hash_;
  }

  const std::string& path() const { return path_; }

 private:
  mutable std::mutex mu_;
  std::string path_;
  std::ofstream out_;
  std::unordered_map<std::string, std::string> entries_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

// ---------------------------------------------------------------------------
// Recording wrappers and replay clients
// ---------------------------------------------------------------------------

class RecordingChat : public ChatClient {
 public:
  RecordingChat(std::shared_ptr<ChatClient> inner, std::shared_ptr<Transcript> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  std::string chat(const ChatRequest& req) override {
    std::string resp = inner_->chat(req);
    log_->append("chat", chat_request_key(req), resp);
    return resp;
  }

 private:
  std::shared_ptr<ChatClient> inner_;
  std::shared_ptr<Transcript> log_;
};

class RecordingEmbedding : public EmbeddingClient {
 public:
  RecordingEmbedding(std::shared_ptr<EmbeddingClient> inner, std::shared_ptr<Transcript> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    auto vecs = inner_->embed(texts);
    log_->append("embed", embed_request_key(texts), json(vecs).dump());
    return vecs;
  }

 private:
  std::shared_ptr<EmbeddingClient> inner_;
  std::shared_ptr<Transcript> log_;
};

class RecordingNli : public NliClient {
 public:
  RecordingNli(std::shared_ptr<NliClient> inner, std::shared_ptr<Transcript> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  EntailmentResult nli(const std::string& premise, const std::string& hypothesis) override {
    EntailmentResult r = inner_->nli(premise, hypothesis);
    log_->append("nli", nli_request_key(premise, hypothesis), json(r).dump());
    return r;
  }

 private:
  std::shared_ptr<NliClient> inner_;
  std::shared_ptr<Transcript> log_;
};

class RecordingSearch : public SearchClient {
 public:
  RecordingSearch(std::shared_ptr<SearchClient> inner, std::shared_ptr<Transcript> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  std::vector<SearchHit> web_search(const std::string& query) override {
    auto hits = inner_->web_search(query);
    log_->append("search", search_request_key(query), json(hits).dump());
    return hits;
  }

 private:
  std::shared_ptr<SearchClient> inner_;
  std::shared_ptr<Transcript> log_;
};

namespace detail {

inline std::string replay_lookup(const Transcript& log, const std::string& endpoint,
                                 const std::string& hash) {
  auto found = log.find(hash);
  if (!found)
    throw Error(ErrorKind::replay_miss,
                "transcript has no entry for " + endpoint + " request " + hash);
  return *found;
}

}  // namespace detail

class ReplayChat : public ChatClient {
 public:
  explicit ReplayChat(std::shared_ptr<Transcript> log) : log_(std::move(log)) {}
  std::string chat(const ChatRequest& req) override {
    return detail::replay_lookup(*log_, "chat", chat_request_key(req));
  }

 private:
  std::shared_ptr<Transcript> log_;
};

class ReplayEmbedding : public EmbeddingClient {
 public:
  explicit ReplayEmbedding(std::shared_ptr<Transcript> log) : log_(std::move(log)) {}
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    std::string body = detail::replay_lookup(*log_, "embed", embed_request_key(texts));
    return json::parse(body).get<std::vector<std::vector<float>>>();
  }

 private:
  std::shared_ptr<Transcript> log_;
};

class ReplayNli : public NliClient {
 public:
  explicit ReplayNli(std::shared_ptr<Transcript> log) : log_(std::move(log)) {}
  EntailmentResult nli(const std::string& premise, const std::string& hypothesis) override {
    std::string body =
        detail::replay_lookup(*log_, "nli", nli_request_key(premise, hypothesis));
    return json::parse(body).get<EntailmentResult>();
  }

 private:
  std::shared_ptr<Transcript> log_;
};

class ReplaySearch : public SearchClient {
 public:
  explicit ReplaySearch(std::shared_ptr<Transcript> log) : log_(std::move(log)) {}
  std::vector<SearchHit> web_search(const std::string& query) override {
    std::string body = detail::replay_lookup(*log_, "search", search_request_key(query));
    return json::parse(body).get<std::vector<SearchHit>>();
  }

 private:
  std::shared_ptr<Transcript> log_;
};

// ---------------------------------------------------------------------------
// Deterministic mocks
// ---------------------------------------------------------------------------

namespace detail {

inline std::string section_after(const std::string& text, const std::string& marker) {
  std::size_t pos = text.rfind(marker);
  if (pos == std::string::npos) return {};
  std::size_t start = pos + marker.size();
  std::size_t end = text.find('\n', start);
  if (end == std::string::npos) end = text.size();
  return trim(text.substr(start, end - start));
}

}  // namespace detail

// Answers every pipeline prompt deterministically from the prompt text alone,
// keyed by the markers the built-in templates emit. Instrumented with an
// in-flight counter so tests can observe the concurrency bound.
class MockChatClient : public ChatClient {
 public:
  using Handler = std::function<std::string(const ChatRequest&)>;

  MockChatClient() = default;
  explicit MockChatClient(Handler handler) : handler_(std::move(handler)) {}

  std::string chat(const ChatRequest& req) override {
    int now = ++in_flight_;
    int seen = max_in_flight_seen_.load();
    while (now > seen && !max_in_flight_seen_.compare_exchange_weak(seen, now)) {
    }
    ++calls_;
    if (work_delay_.count() > 0) std::this_thread::sleep_for(work_delay_);
    std::string out = handler_ ? handler_(req) : default_response(req);
    --in_flight_;
    return out;
  }

  static std::string default_response(const ChatRequest& req) {
    const std::string& u = req.user;
    if (u.find("Counterfactual answer:") != std::string::npos) {
      std::string q = detail::section_after(u, "Question:");
      std::string a = detail::section_after(u, "Counterfactual answer:");
      return "According to widely cited reports, the answer to the question \"" + q +
             "\" is " + a + ". This is corroborated by multiple recent summaries.";
    }
    if (u.find("Rewritten:") != std::string::npos) {
      std::string evidence = detail::section_after(u, "Evidence:");
      std::string variant = detail::section_after(u, "mixes in ");
      std::string out = evidence;
      if (u.find("'code'") != std::string::npos || variant.find("code") == 0) {
        out += "\n```\nfact = lookup(\"" + detail::section_after(u, "Answer:") +
               "\")\nprint(fact)\n```";
      } else {
        out += " See https://example.org/ref/" +
               to_hex(fnv1a64(evidence)).substr(0, 8) + " for details.";
      }
      return out;
    }
    if (u.find("Verdict:") != std::string::npos) {
      return "KEEP";
    }
    if (u.find("Snippet:") != std::string::npos && u.find("FLAW:") != std::string::npos) {
      std::string snippet = detail::section_after(u, "Snippet:");
      return "QUESTION: Considering that the opposite of the snippet holds, what "
             "followed from: " + snippet + "\n"
             "FLAW: the premise contradicts the snippet\n"
             "ANSWER: \n";
    }
    if (u.find("The correct answer is:") != std::string::npos) {
      int n_options = 0;
      for (char c = 'A'; c <= 'Z'; ++c) {
        if (u.find("'" + std::string(1, c) + "':") != std::string::npos) ++n_options;
      }
      if (n_options == 0) n_options = 4;
      char letter = static_cast<char>('A' + fnv1a64(u) % static_cast<unsigned>(n_options));
      return std::string(1, letter) + "\n### Explanation: chosen deterministically by the mock.";
    }
    return "mock-response-" + to_hex(fnv1a64(req.system + "\x1f" + req.user)).substr(0, 12);
  }

  int calls() const { return calls_.load(); }
  int max_in_flight_seen() const { return max_in_flight_seen_.load(); }
  void set_work_delay(std::chrono::milliseconds d) { work_delay_ = d; }

 private:
  Handler handler_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_seen_{0};
  std::atomic<int> calls_{0};
  std::chrono::milliseconds work_delay_{0};
};

// Bag-of-words hashing embedder: shared tokens give correlated vectors, which
// is enough structure for retrieval tests. Unit-normalized, never NaN.
class HashingEmbedder : public EmbeddingClient {
 public:
  explicit HashingEmbedder(std::size_t dim = 8) : dim_(dim) {}

  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  std::vector<float> embed_one(const std::string& text) const {
    std::vector<float> v(dim_, 0.0f);
    for (const auto& tok : split_ws(normalize(text)))
      v[fnv1a64(tok) % dim_] += 1.0f;
    double norm = 0;
    for (float x : v) norm += static_cast<double>(x) * x;
    if (norm == 0) {
      v[0] = 1.0f;
      return v;
    }
    float inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (float& x : v) x *= inv;
    return v;
  }

 private:
  std::size_t dim_;
};

// Entailment heuristic: the built-in hypothesis template ends with the answer
// phrase, so presence of that phrase in the premise drives the verdict.
class MockNliClient : public NliClient {
 public:
  using Handler = std::function<EntailmentResult(const std::string&, const std::string&)>;

  MockNliClient() = default;
  explicit MockNliClient(Handler handler) : handler_(std::move(handler)) {}

  EntailmentResult nli(const std::string& premise, const std::string& hypothesis) override {
    if (trim(premise).empty()) throw Error(ErrorKind::input, "empty premise");
    if (trim(hypothesis).empty()) throw Error(ErrorKind::input, "empty hypothesis");
    if (handler_) return handler_(premise, hypothesis);
    std::string answer = hypothesis;
    std::size_t pos = hypothesis.rfind(" is ");
    if (pos != std::string::npos) answer = hypothesis.substr(pos + 4);
    if (!normalize(answer).empty() && contains_normalized(premise, answer))
      return {0.9, 0.08, 0.02};
    return {0.1, 0.7, 0.2};
  }

 private:
  Handler handler_;
};

// Emits deterministic candidate entities so counterfactual generation works
// fully offline: numeric queries get digit-bumped variants, everything else a
// qualifier prefix.
class MockSearchClient : public SearchClient {
 public:
  using Handler = std::function<std::vector<SearchHit>(const std::string&)>;

  MockSearchClient() = default;
  explicit MockSearchClient(Handler handler) : handler_(std::move(handler)) {}

  std::vector<SearchHit> web_search(const std::string& query) override {
    if (handler_) return handler_(query);
    std::vector<std::string> entities = default_entities(query);
    SearchHit hit;
    hit.title = "Results for " + query;
    hit.snippet = "Related candidates: " + join(entities, "; ");
    hit.entities = entities;
    return {hit};
  }

  static std::vector<std::string> default_entities(const std::string& query) {
    std::string bumped = query;
    bool has_digit = false;
    for (char& c : bumped) {
      if (c >= '0' && c <= '8') {
        c = static_cast<char>(c + 1);
        has_digit = true;
      } else if (c == '9') {
        c = '0';
        has_digit = true;
      }
    }
    if (has_digit) {
      std::string bumped2 = bumped;
      for (char& c : bumped2)
        if (c >= '0' && c <= '8')
          c = static_cast<char>(c + 1);
        else if (c == '9')
          c = '0';
      return {bumped, bumped2};
    }
    return {"New " + query, "Former " + query};
  }

 private:
  Handler handler_;
};

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

struct ClientBundle {
  std::shared_ptr<ChatClient> chat;
  std::shared_ptr<EmbeddingClient> embed;
  std::shared_ptr<NliClient> nli;
  std::shared_ptr<SearchClient> search;
  std::shared_ptr<Transcript> transcript;  // set when recording
};

inline ClientBundle with_recording(ClientBundle b, const std::string& transcript_path) {
  auto log = Transcript::open_for_record(transcript_path);
  ClientBundle out;
  out.chat = std::make_shared<RecordingChat>(b.chat, log);
  out.embed = std::make_shared<RecordingEmbedding>(b.embed, log);
  out.nli = std::make_shared<RecordingNli>(b.nli, log);
  out.search = std::make_shared<RecordingSearch>(b.search, log);
  out.transcript = log;
  return out;
}

inline ClientBundle make_mock_bundle(std::size_t embed_dim = 8) {
  ClientBundle b;
  b.chat = std::make_shared<MockChatClient>();
  b.embed = std::make_shared<HashingEmbedder>(embed_dim);
  b.nli = std::make_shared<MockNliClient>();
  b.search = std::make_shared<MockSearchClient>();
  return b;
}

inline ClientBundle make_replay_bundle(const std::string& transcript_path) {
  auto log = Transcript::load(transcript_path);
  ClientBundle b;
  b.chat = std::make_shared<ReplayChat>(log);
  b.embed = std::make_shared<ReplayEmbedding>(log);
  b.nli = std::make_shared<ReplayNli>(log);
  b.search = std::make_shared<ReplaySearch>(log);
  return b;
}

}  // namespace noiser

#pragma once

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "noiser/clients.hpp"

namespace noiser {

namespace detail {

struct ParsedBase {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix, no trailing slash
};

inline ParsedBase parse_base_url(const std::string& base) {
  std::size_t scheme = base.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorKind::config, "base url must include scheme: " + base);
  std::size_t path = base.find('/', scheme + 3);
  ParsedBase out;
  if (path == std::string::npos) {
    out.origin = base;
  } else {
    out.origin = base.substr(0, path);
    out.prefix = base.substr(path);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

inline std::string url_encode(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 0xf]);
    }
  }
  return out;
}

}  // namespace detail

// Issues one HTTP request per call with retry, exponential backoff and an
// in-flight bound shared across all clients built from the same endpoints.
class HttpTransport {
 public:
  HttpTransport(const std::string& base_url, std::string api_key, ClientPolicy policy)
      : base_(detail::parse_base_url(base_url)),
        api_key_(std::move(api_key)),
        policy_(policy),
        gate_(std::make_shared<std::counting_semaphore<>>(policy.max_in_flight)) {
    policy_.validate();
  }

  std::string post_json(const std::string& path, const json& body) {
    return request([&](httplib::Client& cli, const httplib::Headers& headers) {
      return cli.Post((base_.prefix + path).c_str(), headers, body.dump(),
                      "application/json");
    });
  }

  std::string get(const std::string& path_and_query) {
    return request([&](httplib::Client& cli, const httplib::Headers& headers) {
      return cli.Get((base_.prefix + path_and_query).c_str(), headers);
    });
  }

 private:
  template <class Fn>
  std::string request(Fn&& issue) {
    gate_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{gate_.get()};

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    std::string last_error;
    auto backoff = policy_.backoff_initial;
    for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, policy_.backoff_max);
      }
      httplib::Client cli(base_.origin);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(policy_.timeout));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(policy_.timeout));
      auto res = issue(cli, headers);
      if (!res) {
        last_error = "connection error (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status == 401 || res->status == 403)
        throw Error(ErrorKind::transport, "auth rejected (HTTP " +
                                              std::to_string(res->status) + ")");
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw Error(ErrorKind::transport,
                    "HTTP " + std::to_string(res->status) + ": " + res->body);
      return res->body;
    }
    throw Error(ErrorKind::transport,
                "retries exhausted after " + std::to_string(policy_.max_retries + 1) +
                    " attempts: " + last_error);
  }

  detail::ParsedBase base_;
  std::string api_key_;
  ClientPolicy policy_;
  std::shared_ptr<std::counting_semaphore<>> gate_;
};

// OpenAI-compatible chat completions.
class OpenAiChatClient : public ChatClient {
 public:
  OpenAiChatClient(std::shared_ptr<HttpTransport> transport, std::string default_model)
      : transport_(std::move(transport)), default_model_(std::move(default_model)) {}

  std::string chat(const ChatRequest& req) override {
    if (trim(req.user).empty()) throw Error(ErrorKind::input, "empty user message");
    json messages = json::array();
    if (!req.system.empty())
      messages.push_back({{"role", "system"}, {"content", req.system}});
    messages.push_back({{"role", "user"}, {"content", req.user}});
    json body{{"model", req.model.empty() ? default_model_ : req.model},
              {"messages", messages},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens}};
    json resp = json::parse(transport_->post_json("/chat/completions", body));
    return resp.at("choices").at(0).at("message").at("content").get<std::string>();
  }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string default_model_;
};

// OpenAI-compatible embeddings.
class OpenAiEmbeddingClient : public EmbeddingClient {
 public:
  OpenAiEmbeddingClient(std::shared_ptr<HttpTransport> transport, std::string model)
      : transport_(std::move(transport)), model_(std::move(model)) {}

  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    json body{{"model", model_}, {"input", texts}};
    json resp = json::parse(transport_->post_json("/embeddings", body));
    std::vector<std::vector<float>> out(texts.size());
    for (const auto& item : resp.at("data")) {
      std::size_t idx = item.at("index").get<std::size_t>();
      if (idx >= out.size()) throw Error(ErrorKind::transport, "embedding index out of range");
      out[idx] = item.at("embedding").get<std::vector<float>>();
    }
    return out;
  }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string model_;
};

// Minimal NLI endpoint: POST {premise, hypothesis} -> three probabilities.
class HttpNliClient : public NliClient {
 public:
  explicit HttpNliClient(std::shared_ptr<HttpTransport> transport, std::string path = "/nli")
      : transport_(std::move(transport)), path_(std::move(path)) {}

  EntailmentResult nli(const std::string& premise, const std::string& hypothesis) override {
    if (trim(premise).empty()) throw Error(ErrorKind::input, "empty premise");
    if (trim(hypothesis).empty()) throw Error(ErrorKind::input, "empty hypothesis");
    json resp = json::parse(
        transport_->post_json(path_, json{{"premise", premise}, {"hypothesis", hypothesis}}));
    EntailmentResult r;
    r.p_entail = resp.contains("p_entail") ? resp["p_entail"].get<double>()
                                           : resp.at("entailment").get<double>();
    r.p_neutral = resp.contains("p_neutral") ? resp["p_neutral"].get<double>()
                                             : resp.at("neutral").get<double>();
    r.p_contradict = resp.contains("p_contradict") ? resp["p_contradict"].get<double>()
                                                   : resp.at("contradiction").get<double>();
    return r;
  }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string path_;
};

// Web search over a SerpAPI-style JSON GET endpoint.
class HttpSearchClient : public SearchClient {
 public:
  HttpSearchClient(std::shared_ptr<HttpTransport> transport, std::string key,
                   std::string path = "/search")
      : transport_(std::move(transport)), key_(std::move(key)), path_(std::move(path)) {}

  std::vector<SearchHit> web_search(const std::string& query) override {
    std::string url = path_ + "?q=" + detail::url_encode(query);
    if (!key_.empty()) url += "&api_key=" + detail::url_encode(key_);
    json resp = json::parse(transport_->get(url));
    const json* results = nullptr;
    if (resp.contains("results"))
      results = &resp["results"];
    else if (resp.contains("organic_results"))
      results = &resp["organic_results"];
    if (!results || !results->is_array())
      throw Error(ErrorKind::transport, "search response has no results array");
    std::vector<SearchHit> hits;
    for (const auto& r : *results) hits.push_back(r.get<SearchHit>());
    return hits;
  }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string key_;
  std::string path_;
};

struct HttpEndpoints {
  std::string api_base;     // NOISER_API_BASE
  std::string api_key;      // NOISER_API_KEY
  std::string search_base;  // defaults to api_base
  std::string search_key;   // NOISER_SEARCH_KEY
  std::string chat_model = "gpt-3.5-turbo";
  std::string embed_model = "text-embedding-3-small";
};

inline ClientBundle make_http_bundle(const HttpEndpoints& ep, const ClientPolicy& policy) {
  if (ep.api_base.empty())
    throw Error(ErrorKind::config, "api base url not configured (NOISER_API_BASE)");
  auto transport = std::make_shared<HttpTransport>(ep.api_base, ep.api_key, policy);
  auto search_transport =
      ep.search_base.empty() || ep.search_base == ep.api_base
          ? transport
          : std::make_shared<HttpTransport>(ep.search_base, std::string(), policy);
  ClientBundle b;
  b.chat = std::make_shared<OpenAiChatClient>(transport, ep.chat_model);
  b.embed = std::make_shared<OpenAiEmbeddingClient>(transport, ep.embed_model);
  b.nli = std::make_shared<HttpNliClient>(transport);
  b.search = std::make_shared<HttpSearchClient>(search_transport, ep.search_key);
  return b;
}

}  // namespace noiser

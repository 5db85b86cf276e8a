#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "noiser/clients.hpp"
#include "noiser/core.hpp"
#include "noiser/rng.hpp"
#include "noiser/verification.hpp"

namespace noiser {

inline constexpr int kDefaultTopK = 5;
inline constexpr double kDefaultSemanticThreshold = 0.3;

struct Passage {
  std::string doc_id;
  std::string title;
  std::string text;
};

inline void to_json(json& j, const Passage& p) {
  j = json{{"doc_id", p.doc_id}, {"title", p.title}, {"text", p.text}};
}

inline void from_json(const json& j, Passage& p) {
  p.doc_id = j.at("doc_id").get<std::string>();
  p.title = j.value("title", std::string());
  p.text = j.at("text").get<std::string>();
}

struct PassageCorpus {
  std::vector<Passage> passages;
  std::string source;

  const Passage* find(const std::string& doc_id) const {
    for (const auto& p : passages)
      if (p.doc_id == doc_id) return &p;
    return nullptr;
  }
};

enum class CorpusFormat { jsonl, tsv };

// Streaming parse; malformed lines are reported with their line number and
// duplicate ids name both offending lines.
inline PassageCorpus ingest_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  PassageCorpus corpus;
  corpus.source = path;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  std::size_t seq = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Passage p;
    if (format == CorpusFormat::jsonl) {
      try {
        json j = json::parse(line);
        p.doc_id = j.contains("doc_id") ? j["doc_id"].get<std::string>()
                                        : j.at("id").get<std::string>();
        p.title = j.value("title", std::string());
        p.text = j.at("text").get<std::string>();
      } catch (const std::exception& e) {
        throw Error(ErrorKind::parse,
                    path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    } else {
      std::size_t tab = line.find('\t');
      if (tab == std::string::npos)
        throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) +
                                          ": expected title<TAB>text");
      char buf[16];
      std::snprintf(buf, sizeof(buf), "p%06zu", ++seq);
      p.doc_id = buf;
      p.title = trim(line.substr(0, tab));
      p.text = trim(line.substr(tab + 1));
    }
    if (trim(p.text).empty())
      throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": empty text");
    auto [it, inserted] = seen.emplace(p.doc_id, lineno);
    if (!inserted)
      throw Error(ErrorKind::parse, path + ": duplicate doc_id '" + p.doc_id +
                                        "' on lines " + std::to_string(it->second) +
                                        " and " + std::to_string(lineno));
    corpus.passages.push_back(std::move(p));
  }
  return corpus;
}

// Dense vectors, one row per corpus passage, row order equals corpus order.
struct EmbeddingIndex {
  std::vector<float> data;      // row-major, rows() x dim
  std::size_t dim = 0;
  std::vector<std::string> doc_ids;
  std::string model_tag;

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }

  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

inline EmbeddingIndex build_index(const PassageCorpus& corpus, EmbeddingClient& embed,
                                  std::size_t batch_size = 16,
                                  const std::string& model_tag = "default") {
  if (corpus.passages.empty()) throw Error(ErrorKind::input, "empty corpus");
  EmbeddingIndex index;
  index.model_tag = model_tag;
  for (std::size_t start = 0; start < corpus.passages.size(); start += batch_size) {
    std::size_t end = std::min(start + batch_size, corpus.passages.size());
    std::vector<std::string> texts;
    for (std::size_t i = start; i < end; ++i) texts.push_back(corpus.passages[i].text);
    auto vectors = embed.embed(texts);
    if (vectors.size() != texts.size())
      throw Error(ErrorKind::transport, "embedding batch returned wrong row count");
    for (const auto& v : vectors) {
      if (index.dim == 0) index.dim = v.size();
      if (v.size() != index.dim)
        throw Error(ErrorKind::transport,
                    "embedding dimension mismatch: expected " + std::to_string(index.dim) +
                        ", got " + std::to_string(v.size()));
      for (float x : v) {
        if (std::isnan(x)) throw Error(ErrorKind::transport, "NaN in embedding");
        index.data.push_back(x);
      }
    }
  }
  if (index.dim == 0) throw Error(ErrorKind::transport, "embedding dimension is zero");
  for (const auto& p : corpus.passages) index.doc_ids.push_back(p.doc_id);
  return index;
}

// Index file layout: magic, version, dim, row count, model tag, then the rows
// as little-endian float32. Row-to-passage binding comes from the corpus.
inline constexpr char kIndexMagic[8] = {'N', 'O', 'I', 'S', 'E', 'R', 'I', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;

inline void save_index(const EmbeddingIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  auto put_u32 = [&](std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
  };
  auto put_u64 = [&](std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
  };
  out.write(kIndexMagic, 8);
  put_u32(kIndexVersion);
  put_u32(static_cast<std::uint32_t>(index.dim));
  put_u64(index.rows());
  put_u32(static_cast<std::uint32_t>(index.model_tag.size()));
  out.write(index.model_tag.data(), static_cast<std::streamsize>(index.model_tag.size()));
  for (float x : index.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    put_u32(bits);
  }
}

inline EmbeddingIndex load_index(const std::string& path, const PassageCorpus& corpus) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  auto get_u32 = [&]() {
    char b[4];
    in.read(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  };
  auto get_u64 = [&]() {
    char b[8];
    in.read(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  };
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kIndexMagic, 8) != 0)
    throw Error(ErrorKind::parse, path + ": not an index file");
  std::uint32_t version = get_u32();
  if (version != kIndexVersion)
    throw Error(ErrorKind::parse, path + ": unsupported index version " + std::to_string(version));
  EmbeddingIndex index;
  index.dim = get_u32();
  std::uint64_t rows = get_u64();
  std::uint32_t tag_len = get_u32();
  index.model_tag.resize(tag_len);
  in.read(index.model_tag.data(), tag_len);
  index.data.resize(rows * index.dim);
  for (auto& x : index.data) {
    std::uint32_t bits = get_u32();
    std::memcpy(&x, &bits, 4);
  }
  if (!in) throw Error(ErrorKind::parse, path + ": truncated index file");
  if (rows != corpus.passages.size())
    throw Error(ErrorKind::input, "index rows (" + std::to_string(rows) +
                                      ") do not match corpus size (" +
                                      std::to_string(corpus.passages.size()) + ")");
  for (const auto& p : corpus.passages) index.doc_ids.push_back(p.doc_id);
  return index;
}

struct ScoredDoc {
  std::string doc_id;
  float score = 0.0f;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

inline double cosine(std::span<const float> a, std::span<const float> b) {
  double na = std::sqrt(dot(a, a));
  double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// Exact brute-force ranking by raw dot product, descending, ties broken by
// ascending doc_id.
inline std::vector<ScoredDoc> search(const EmbeddingIndex& index,
                                     std::span<const float> query, std::size_t k = kDefaultTopK) {
  if (k < 1) throw Error(ErrorKind::input, "k must be >= 1");
  if (query.size() != index.dim)
    throw Error(ErrorKind::input, "query dimension " + std::to_string(query.size()) +
                                      " does not match index dimension " +
                                      std::to_string(index.dim));
  std::vector<ScoredDoc> scored(index.rows());
  for (std::size_t i = 0; i < index.rows(); ++i) {
    scored[i].doc_id = index.doc_ids[i];
    scored[i].score = static_cast<float>(dot(index.row(i), query));
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// Top-k passages that read as on-topic but contain no answer: every candidate
// must pass the alias leak check and stay below the entailment gate.
inline std::vector<NoiseDocument> select_supportive(const QAInstance& inst,
                                                    const EmbeddingIndex& index,
                                                    const PassageCorpus& corpus,
                                                    EmbeddingClient& embed, NliClient& nli,
                                                    std::size_t k = kDefaultTopK,
                                                    double entail_threshold = kEntailmentThreshold) {
  auto query = embed.embed({inst.question});
  auto ranked = search(index, query.at(0), k);
  std::vector<NoiseDocument> out;
  for (const auto& hit : ranked) {
    const Passage* p = corpus.find(hit.doc_id);
    if (!p) continue;
    if (!inst.answer_aliases.empty() && answer_leak(p->text, inst.answer_aliases)) continue;
    GateDecision gate = entailment_gate(p->text, inst, nli, entail_threshold);
    if (gate.keep) continue;
    NoiseDocument doc;
    doc.doc_id = "sun-" + p->doc_id + "-" + inst.id;
    doc.text = p->text;
    doc.kind = NoiseKind::supportive;
    doc.gen_meta = json{{"source", p->doc_id},
                        {"similarity", hit.score},
                        {"p_entail", gate.score ? *gate.score : 0.0}};
    out.push_back(std::move(doc));
  }
  return out;
}

// Off-topic passages: cosine similarity below the threshold, then a seeded
// uniform sample from the qualifying pool.
inline std::vector<NoiseDocument> select_semantic(const QAInstance& inst,
                                                  const EmbeddingIndex& index,
                                                  const PassageCorpus& corpus,
                                                  EmbeddingClient& embed,
                                                  double threshold = kDefaultSemanticThreshold,
                                                  std::size_t count = 4,
                                                  std::uint64_t seed = 0) {
  auto query = embed.embed({inst.question});
  std::span<const float> q(query.at(0));
  std::vector<std::pair<std::size_t, double>> pool;
  for (std::size_t i = 0; i < index.rows(); ++i) {
    double sim = cosine(index.row(i), q);
    if (sim < threshold) pool.emplace_back(i, sim);
  }
  Rng rng(mix_seed(seed, "semantic", fnv1a64(inst.id)));
  auto chosen = rng.sample(pool, count);
  std::vector<NoiseDocument> out;
  for (const auto& [i, sim] : chosen) {
    const Passage& p = corpus.passages[i];
    NoiseDocument doc;
    doc.doc_id = "sen-" + p.doc_id + "-" + inst.id;
    doc.text = p.text;
    doc.kind = NoiseKind::semantic;
    doc.gen_meta = json{{"source", p.doc_id}, {"similarity", sim}, {"seed", seed}};
    out.push_back(std::move(doc));
  }
  return out;
}

}  // namespace noiser

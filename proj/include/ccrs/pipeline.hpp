#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ccrs/error.hpp"
#include "ccrs/http.hpp"
#include "ccrs/random.hpp"
#include "ccrs/records.hpp"
#include "ccrs/util.hpp"

namespace ccrs {

// ---------------------------------------------------------------------------
// Tokenization and chunking
// ---------------------------------------------------------------------------

/// Byte span of one token in the source text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
};

/// Splits on ASCII whitespace.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::vector<TokenSpan> tokenize(std::string_view text) const override {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i == text.size()) break;
      const std::size_t start = i;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      out.push_back({start, i});
    }
    return out;
  }
};

struct ChunkingConfig {
  std::size_t chunk_tokens = 300;
  double overlap_fraction = 0.2;
  std::shared_ptr<const Tokenizer> tokenizer = std::make_shared<WhitespaceTokenizer>();

  /// Overlap in whole tokens: round(chunk_tokens * overlap_fraction).
  std::size_t overlap_tokens() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(chunk_tokens) * overlap_fraction));
  }
  std::size_t stride() const { return chunk_tokens - overlap_tokens(); }

  void validate() const {
    if (chunk_tokens < 1) throw Error(ErrorCode::Config, "chunk_tokens must be >= 1");
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
      throw Error(ErrorCode::Config, "overlap_fraction must be in [0,1)");
    if (overlap_tokens() >= chunk_tokens) throw Error(ErrorCode::Config, "stride must be >= 1");
    if (!tokenizer) throw Error(ErrorCode::Config, "no tokenizer");
  }
};

struct Chunk {
  std::string doc_id;
  std::size_t chunk_index = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;
  std::string text;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Fixed-size token windows starting at multiples of the stride; the last
/// window may be short. Chunk text is the source slice from the first to the
/// last token of the window, so original spacing is preserved.
inline std::vector<Chunk> chunk_document(const DocumentRecord& doc, const ChunkingConfig& cfg = {}) {
  cfg.validate();
  const auto tokens = cfg.tokenizer->tokenize(doc.text);
  std::vector<Chunk> out;
  const std::size_t n = tokens.size();
  for (std::size_t start = 0; start < n; start += cfg.stride()) {
    const std::size_t end = std::min(start + cfg.chunk_tokens, n);
    const std::size_t b = tokens[start].begin, e = tokens[end - 1].end;
    out.push_back(Chunk{doc.doc_id, out.size(), start, end, doc.text.substr(b, e - b)});
    if (end == n) break;
  }
  return out;
}

inline std::vector<Chunk> chunk_corpus(const std::vector<DocumentRecord>& docs, const ChunkingConfig& cfg = {}) {
  std::vector<Chunk> out;
  for (const auto& d : docs) {
    auto chunks = chunk_document(d, cfg);
    std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

struct ScoredChunk {
  const Chunk* chunk = nullptr;
  double score = 0.0;
};

namespace detail {

/// Orders by score descending, then (doc_id, chunk_index) ascending.
inline void rank_and_truncate(std::vector<ScoredChunk>& hits, std::size_t top_k) {
  std::sort(hits.begin(), hits.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.chunk->doc_id != b.chunk->doc_id) return a.chunk->doc_id < b.chunk->doc_id;
    return a.chunk->chunk_index < b.chunk->chunk_index;
  });
  if (hits.size() > top_k) hits.resize(top_k);
}

}  // namespace detail

/// Lower-cased alphanumeric runs; bytes >= 0x80 are kept inside terms so
/// UTF-8 words survive intact.
inline std::vector<std::string> analyze_terms(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct Bm25Config {
  double k1 = 1.2;
  double b = 0.75;
  std::size_t top_k = 20;

  void validate() const {
    if (k1 < 0) throw Error(ErrorCode::Config, "k1 must be >= 0");
    if (!(b >= 0 && b <= 1)) throw Error(ErrorCode::Config, "b must be in [0,1]");
    if (top_k < 1) throw Error(ErrorCode::Config, "top_k must be >= 1");
  }
};

/// Immutable inverted index over chunks. Built once, then safe for
/// concurrent searches.
class Bm25Index {
 public:
  struct Posting {
    std::uint32_t chunk;
    std::uint32_t tf;
  };

  explicit Bm25Index(std::vector<Chunk> chunks) : chunks_(std::move(chunks)) {
    lengths_.reserve(chunks_.size());
    double total = 0;
    for (std::uint32_t i = 0; i < chunks_.size(); ++i) {
      const auto terms = analyze_terms(chunks_[i].text);
      lengths_.push_back(static_cast<double>(terms.size()));
      total += static_cast<double>(terms.size());
      std::unordered_map<std::string, std::uint32_t> tf;
      for (const auto& t : terms) ++tf[t];
      for (auto& [term, count] : tf) postings_[term].push_back({i, count});
    }
    avgdl_ = chunks_.empty() ? 0.0 : total / static_cast<double>(chunks_.size());
  }

  std::size_t size() const { return chunks_.size(); }
  const std::vector<Chunk>& chunks() const { return chunks_; }
  double average_length() const { return avgdl_; }
  double length(std::size_t i) const { return lengths_[i]; }

  std::size_t document_frequency(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
  }

  /// Okapi IDF floored at 0: max(0, ln((N - n + 0.5) / (n + 0.5))).
  double idf(const std::string& term) const {
    const double n = static_cast<double>(document_frequency(term));
    const double N = static_cast<double>(chunks_.size());
    return std::max(0.0, std::log((N - n + 0.5) / (n + 0.5)));
  }

  /// Every chunk scored against the distinct query terms, ranked, cut to top_k.
  std::vector<ScoredChunk> search(std::string_view query, const Bm25Config& cfg = {}) const {
    cfg.validate();
    if (chunks_.empty()) throw Error(ErrorCode::EmptyIndex, "bm25 index has no chunks");
    std::vector<double> scores(chunks_.size(), 0.0);
    auto terms = analyze_terms(query);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (const auto& term : terms) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double w = idf(term);
      for (const auto& p : it->second) {
        const double tf = p.tf;
        const double rel = avgdl_ > 0 ? lengths_[p.chunk] / avgdl_ : 1.0;
        const double norm = cfg.k1 * (1.0 - cfg.b + cfg.b * rel);
        scores[p.chunk] += w * tf * (cfg.k1 + 1.0) / (tf + norm);
      }
    }
    std::vector<ScoredChunk> hits;
    hits.reserve(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) hits.push_back({&chunks_[i], scores[i]});
    detail::rank_and_truncate(hits, cfg.top_k);
    return hits;
  }

 private:
  std::vector<Chunk> chunks_;
  std::vector<double> lengths_;
  double avgdl_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

inline Bm25Index bm25_index(std::vector<Chunk> chunks) { return Bm25Index(std::move(chunks)); }

inline std::vector<ScoredChunk> bm25_search(const Bm25Index& index, std::string_view query, const Bm25Config& cfg = {}) {
  return index.search(query, cfg);
}

/// Turns texts into fixed-dimension vectors.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) const = 0;
};

class HttpEmbedding final : public EmbeddingBackend {
 public:
  explicit HttpEmbedding(EndpointConfig cfg) : client_(std::move(cfg)) {}
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) const override {
    return client_.embed(texts);
  }

 private:
  EmbeddingClient client_;
};

/// Offline embedding: signed feature hashing of analyzed terms into `dim`
/// buckets. Deterministic for a given seed; shares no state.
class HashingEmbedding final : public EmbeddingBackend {
 public:
  explicit HashingEmbedding(std::size_t dim = 256, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) const override {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      std::vector<float> v(dim_, 0.0f);
      for (const auto& term : analyze_terms(t)) {
        const std::uint64_t h = splitmix64(fnv1a64(term) ^ seed_);
        v[h % dim_] += (h >> 63) ? -1.0f : 1.0f;
      }
      out.push_back(std::move(v));
    }
    return out;
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Exhaustive cosine-similarity index over stored chunk vectors.
class DenseIndex {
 public:
  DenseIndex(std::vector<Chunk> chunks, std::vector<std::vector<float>> vectors)
      : chunks_(std::move(chunks)) {
    if (vectors.size() != chunks_.size())
      throw Error(ErrorCode::DimensionMismatch, "vector count differs from chunk count");
    dim_ = vectors.empty() ? 0 : vectors.front().size();
    norms_.reserve(vectors.size());
    for (auto& v : vectors) {
      if (v.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "inconsistent embedding dimension");
      double ss = 0;
      for (float x : v) ss += static_cast<double>(x) * x;
      norms_.push_back(std::sqrt(ss));
      vectors_.push_back(std::move(v));
    }
  }

  /// Embeds every chunk through `backend`.
  static DenseIndex build(std::vector<Chunk> chunks, const EmbeddingBackend& backend, std::size_t batch = 64) {
    std::vector<std::vector<float>> vectors;
    for (std::size_t i = 0; i < chunks.size(); i += batch) {
      std::vector<std::string> texts;
      for (std::size_t j = i; j < std::min(chunks.size(), i + batch); ++j) texts.push_back(chunks[j].text);
      auto part = backend.embed(texts);
      std::move(part.begin(), part.end(), std::back_inserter(vectors));
    }
    return DenseIndex(std::move(chunks), std::move(vectors));
  }

  std::size_t size() const { return chunks_.size(); }
  std::size_t dimension() const { return dim_; }
  const std::vector<Chunk>& chunks() const { return chunks_; }

  /// Cosine similarity; 0 when either vector has zero norm.
  std::vector<ScoredChunk> search(std::span<const float> query, std::size_t top_k) const {
    if (chunks_.empty()) throw Error(ErrorCode::EmptyIndex, "dense index has no chunks");
    if (query.size() != dim_) throw Error(ErrorCode::DimensionMismatch,
                                          "query has " + std::to_string(query.size()) + " dims, index " + std::to_string(dim_));
    double qn = 0;
    for (float x : query) qn += static_cast<double>(x) * x;
    qn = std::sqrt(qn);
    std::vector<ScoredChunk> hits;
    hits.reserve(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
      double dot = 0;
      for (std::size_t d = 0; d < dim_; ++d) dot += static_cast<double>(vectors_[i][d]) * query[d];
      const double denom = qn * norms_[i];
      hits.push_back({&chunks_[i], denom > 0 ? dot / denom : 0.0});
    }
    detail::rank_and_truncate(hits, top_k);
    return hits;
  }

 private:
  std::vector<Chunk> chunks_;
  std::vector<std::vector<float>> vectors_;
  std::vector<double> norms_;
  std::size_t dim_ = 0;
};

inline std::vector<ScoredChunk> dense_search(const DenseIndex& index, std::string_view query,
                                             const EmbeddingBackend& backend, std::size_t top_k = 20) {
  auto v = backend.embed({std::string(query)});
  if (v.size() != 1) throw Error(ErrorCode::MalformedReply, "expected one query embedding");
  return index.search(v.front(), top_k);
}

/// Retrieval strategy used by the end-to-end pipeline.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::vector<ScoredChunk> retrieve(std::string_view query, std::size_t top_k) const = 0;
};

class Bm25Retriever final : public Retriever {
 public:
  Bm25Retriever(std::vector<Chunk> chunks, double k1 = 1.2, double b = 0.75) : index_(std::move(chunks)), k1_(k1), b_(b) {}
  std::vector<ScoredChunk> retrieve(std::string_view query, std::size_t top_k) const override {
    return index_.search(query, Bm25Config{k1_, b_, top_k});
  }

 private:
  Bm25Index index_;
  double k1_, b_;
};

class DenseRetriever final : public Retriever {
 public:
  DenseRetriever(std::vector<Chunk> chunks, std::shared_ptr<const EmbeddingBackend> backend)
      : backend_(std::move(backend)), index_(DenseIndex::build(std::move(chunks), *backend_)) {}
  std::vector<ScoredChunk> retrieve(std::string_view query, std::size_t top_k) const override {
    return dense_search(index_, query, *backend_, top_k);
  }

 private:
  std::shared_ptr<const EmbeddingBackend> backend_;
  DenseIndex index_;
};

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

/// Replaces "</content>" inside chunk text so it cannot close the element early.
inline std::string escape_chunk_text(std::string_view text) {
  static constexpr std::string_view kClose = "</content>";
  static constexpr std::string_view kEscaped = "&lt;/content&gt;";
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (true) {
    const auto hit = text.find(kClose, pos);
    if (hit == std::string_view::npos) break;
    out.append(text.substr(pos, hit - pos));
    out.append(kEscaped);
    pos = hit + kClose.size();
  }
  out.append(text.substr(pos));
  return out;
}

/// The <context> block of the reader prompt: one <content> element per chunk
/// in retrieval order.
inline std::string render_context_block(const std::vector<std::string>& chunk_texts) {
  std::string out = "<context>\n";
  for (const auto& t : chunk_texts) {
    out += "<content>";
    out += escape_chunk_text(t);
    out += "</content>\n";
  }
  out += "</context>";
  return out;
}

inline std::string build_reader_prompt(const std::vector<std::string>& chunk_texts, std::string_view question) {
  std::string out = "Please answer the given question based on the context.\n";
  out += render_context_block(chunk_texts);
  out += "\n\nQuestion: ";
  out += question;
  out += "\n\nPlease answer the question and tag your answer with <answer></answer>.";
  return out;
}

inline std::string build_reader_prompt(const std::vector<Chunk>& chunks, std::string_view question) {
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  return build_reader_prompt(texts, question);
}

/// Content of the first <answer>...</answer> span, whitespace-trimmed; empty
/// if there is no complete span.
inline std::string extract_answer(std::string_view generation) {
  static constexpr std::string_view kOpen = "<answer>", kClose = "</answer>";
  const auto open = generation.find(kOpen);
  if (open == std::string_view::npos) return {};
  const auto start = open + kOpen.size();
  const auto close = generation.find(kClose, start);
  if (close == std::string_view::npos) return {};
  std::string_view body = generation.substr(start, close - start);
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
  return std::string(body);
}

/// Reader LLM. Implementations must be safe to call concurrently.
class ReaderBackend {
 public:
  virtual ~ReaderBackend() = default;
  virtual std::string generate(std::string_view prompt) const = 0;
};

/// Chat endpoint at temperature 0 with a 2048-token response cap unless the
/// config says otherwise.
class HttpReader final : public ReaderBackend {
 public:
  explicit HttpReader(EndpointConfig cfg) : client_(with_defaults(std::move(cfg))) {}
  std::string generate(std::string_view prompt) const override { return client_.complete(prompt); }

  static EndpointConfig with_defaults(EndpointConfig cfg) {
    if (!cfg.max_tokens) cfg.max_tokens = 2048;
    return cfg;
  }

 private:
  ChatClient client_;
};

/// Always replies with the same text.
class FixedReader final : public ReaderBackend {
 public:
  explicit FixedReader(std::string reply) : reply_(std::move(reply)) {}
  std::string generate(std::string_view) const override { return reply_; }

 private:
  std::string reply_;
};

/// Offline reader: answers with a seed-dependent window of words from the
/// first <content> element, wrapped in <answer> tags.
class ExtractiveMockReader final : public ReaderBackend {
 public:
  explicit ExtractiveMockReader(std::uint64_t seed = 0, std::size_t max_words = 12) : seed_(seed), max_words_(max_words) {}

  std::string generate(std::string_view prompt) const override {
    const auto open = prompt.find("<content>");
    if (open == std::string_view::npos) return "I cannot answer from the given context.";
    const auto start = open + 9;
    const auto close = prompt.find("</content>", start);
    const auto words = WhitespaceTokenizer().tokenize(prompt.substr(start, close - start));
    if (words.empty()) return "<answer></answer>";
    const std::uint64_t h = splitmix64(fnv1a64(prompt) ^ seed_);
    const std::size_t count = 1 + h % max_words_;
    const std::size_t first = (h >> 20) % words.size();
    const std::size_t last = std::min(words.size(), first + count);
    const std::string_view body = prompt.substr(start);
    return "Based on the context: <answer>" +
           std::string(body.substr(words[first].begin, words[last - 1].end - words[first].begin)) + "</answer>";
  }

 private:
  std::uint64_t seed_;
  std::size_t max_words_;
};

inline std::string generate(std::string_view prompt, const ReaderBackend& reader) { return reader.generate(prompt); }

// ---------------------------------------------------------------------------
// End-to-end
// ---------------------------------------------------------------------------

struct ChunkRef {
  std::string doc_id;
  std::size_t chunk_index = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;
  double score = 0.0;
  std::string text;

  friend bool operator==(const ChunkRef&, const ChunkRef&) = default;
};

struct RagOutput {
  std::int64_t query_id = 0;
  std::vector<ChunkRef> context_chunks;
  /// Context string shown to the reader and the judge (the <context> block).
  std::string context_text;
  std::string generation_raw;
  std::string response;

  friend bool operator==(const RagOutput&, const RagOutput&) = default;
};

inline RagOutput run_rag(const QueryRecord& query, const Retriever& retriever, const ReaderBackend& reader,
                         std::size_t top_k = 20) {
  RagOutput out;
  out.query_id = query.query_id;
  std::vector<std::string> texts;
  for (const auto& hit : retriever.retrieve(query.text, top_k)) {
    const Chunk& c = *hit.chunk;
    out.context_chunks.push_back({c.doc_id, c.chunk_index, c.token_start, c.token_end, hit.score, c.text});
    texts.push_back(c.text);
  }
  out.context_text = render_context_block(texts);
  out.generation_raw = reader.generate(build_reader_prompt(texts, query.text));
  out.response = extract_answer(out.generation_raw);
  return out;
}

inline json to_json(const RagOutput& o) {
  json chunks = json::array();
  for (const auto& c : o.context_chunks)
    chunks.push_back({{"doc_id", c.doc_id},
                      {"chunk_index", c.chunk_index},
                      {"token_start", c.token_start},
                      {"token_end", c.token_end},
                      {"score", c.score},
                      {"text", c.text}});
  return {{"query_id", o.query_id},
          {"context_text", o.context_text},
          {"response", o.response},
          {"generation_raw", o.generation_raw},
          {"chunks", chunks}};
}

inline RagOutput rag_output_from_json(const json& j, const std::string& origin = "<rag output>") {
  if (!j.is_object() || !j.contains("query_id") || !j["query_id"].is_number_integer())
    throw Error(ErrorCode::MalformedJson, origin + ": field 'query_id'");
  RagOutput o;
  o.query_id = j["query_id"].get<std::int64_t>();
  o.context_text = j.value("context_text", std::string());
  o.generation_raw = j.value("generation_raw", std::string());
  if (j.contains("response") && j["response"].is_string())
    o.response = j["response"].get<std::string>();
  else
    o.response = extract_answer(o.generation_raw);
  if (auto it = j.find("chunks"); it != j.end() && it->is_array())
    for (const auto& c : *it)
      o.context_chunks.push_back({c.value("doc_id", std::string()), c.value("chunk_index", std::size_t{0}),
                                  c.value("token_start", std::size_t{0}), c.value("token_end", std::size_t{0}),
                                  c.value("score", 0.0), c.value("text", std::string())});
  return o;
}

inline std::vector<RagOutput> load_rag_outputs(const std::filesystem::path& path) {
  const json doc = load_json_file(path);
  const json& list = doc.is_object() && doc.contains("outputs") ? doc["outputs"] : doc;
  if (!list.is_array()) throw Error(ErrorCode::NotAList, path.string());
  std::vector<RagOutput> out;
  for (const auto& item : list) out.push_back(rag_output_from_json(item, path.string()));
  return out;
}

inline void write_rag_outputs(const std::filesystem::path& path, const std::vector<RagOutput>& outputs) {
  json list = json::array();
  for (const auto& o : outputs) list.push_back(to_json(o));
  write_text_file(path, json{{"outputs", list}}.dump(2) + "\n");
}

}  // namespace ccrs

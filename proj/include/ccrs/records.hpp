#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <functional>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ccrs/error.hpp"
#include "ccrs/matrix.hpp"
#include "ccrs/util.hpp"

namespace ccrs {

// ---------------------------------------------------------------------------
// Metric identities
// ---------------------------------------------------------------------------

enum class Metric : std::size_t { CC = 0, QR = 1, ID = 2, AC = 3, IR = 4 };

inline constexpr std::size_t kMetricCount = 5;

inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {Metric::CC, Metric::QR, Metric::ID,
                                                                 Metric::AC, Metric::IR};

/// Canonical result-file keys. Aliases are not accepted.
inline constexpr std::array<std::string_view, kMetricCount> kMetricKeys = {
    "Contextual_Coherence", "Question_Relevance", "Information_Density", "Answer_Correctness",
    "Information_Recall"};

inline constexpr std::array<std::string_view, kMetricCount> kMetricAbbrev = {"CC", "QR", "ID", "AC",
                                                                             "IR"};

constexpr std::size_t index_of(Metric m) { return static_cast<std::size_t>(m); }
constexpr std::string_view key_of(Metric m) { return kMetricKeys[index_of(m)]; }
constexpr std::string_view abbrev_of(Metric m) { return kMetricAbbrev[index_of(m)]; }

inline std::optional<Metric> metric_from_abbrev(std::string_view s) {
  for (Metric m : kAllMetrics)
    if (abbrev_of(m) == s) return m;
  return std::nullopt;
}

/// The five scores of one response, each in [0,1].
struct MetricVector {
  double cc = 0.0;
  double qr = 0.0;
  double id = 0.0;
  double ac = 0.0;
  double ir = 0.0;

  double get(Metric m) const {
    switch (m) {
      case Metric::CC: return cc;
      case Metric::QR: return qr;
      case Metric::ID: return id;
      case Metric::AC: return ac;
      case Metric::IR: return ir;
    }
    return 0.0;
  }
  void set(Metric m, double v) {
    switch (m) {
      case Metric::CC: cc = v; break;
      case Metric::QR: qr = v; break;
      case Metric::ID: id = v; break;
      case Metric::AC: ac = v; break;
      case Metric::IR: ir = v; break;
    }
  }

  friend bool operator==(const MetricVector&, const MetricVector&) = default;
};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct QueryRecord {
  std::int64_t query_id = 0;
  std::string text;
  std::string gt_answer;
  std::map<std::string, json> metadata;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct DocumentRecord {
  std::string doc_id;
  std::string title;
  std::string text;
  std::map<std::string, json> metadata;

  friend bool operator==(const DocumentRecord&, const DocumentRecord&) = default;
};

struct Dataset {
  std::vector<QueryRecord> queries;
  std::vector<DocumentRecord> documents;
};

namespace detail {

inline std::string field_path(const std::string& origin, std::size_t index, std::string_view field) {
  return origin + ": item " + std::to_string(index) + ": field '" + std::string(field) + "'";
}

inline std::map<std::string, json> parse_metadata(const json& item) {
  std::map<std::string, json> out;
  if (auto it = item.find("metadata"); it != item.end() && it->is_object())
    for (auto& [k, v] : it->items()) out.emplace(k, v);
  return out;
}

inline QueryRecord parse_query(const json& item, std::size_t index, const std::string& origin) {
  if (!item.is_object()) throw Error(ErrorCode::MalformedJson, origin + ": item " + std::to_string(index) + " is not an object");
  QueryRecord q;
  auto id = item.find("query_id");
  if (id == item.end() || !id->is_number_integer() || id->get<std::int64_t>() < 0)
    throw Error(ErrorCode::MalformedJson, field_path(origin, index, "query_id"));
  q.query_id = id->get<std::int64_t>();
  auto text = item.find("text");
  if (text == item.end() || !text->is_string() || text->get<std::string>().empty())
    throw Error(ErrorCode::MalformedJson, field_path(origin, index, "text"));
  q.text = text->get<std::string>();
  if (auto gt = item.find("gt_answer"); gt != item.end()) {
    if (!gt->is_string()) throw Error(ErrorCode::MalformedJson, field_path(origin, index, "gt_answer"));
    q.gt_answer = gt->get<std::string>();
  }
  q.metadata = parse_metadata(item);
  return q;
}

inline DocumentRecord parse_document(const json& item, std::size_t index, const std::string& origin) {
  if (!item.is_object()) throw Error(ErrorCode::MalformedJson, origin + ": item " + std::to_string(index) + " is not an object");
  DocumentRecord d;
  auto id = item.find("doc_id");
  if (id == item.end()) throw Error(ErrorCode::MalformedJson, field_path(origin, index, "doc_id"));
  if (id->is_string())
    d.doc_id = id->get<std::string>();
  else if (id->is_number_integer())
    d.doc_id = std::to_string(id->get<std::int64_t>());
  else
    throw Error(ErrorCode::MalformedJson, field_path(origin, index, "doc_id"));
  auto text = item.find("text");
  if (text == item.end() || !text->is_string() || text->get<std::string>().empty())
    throw Error(ErrorCode::MalformedJson, field_path(origin, index, "text"));
  d.text = text->get<std::string>();
  if (auto title = item.find("title"); title != item.end() && title->is_string()) d.title = title->get<std::string>();
  d.metadata = parse_metadata(item);
  return d;
}

inline void append_queries(const json& list, const std::string& origin, Dataset& out) {
  if (!list.is_array()) throw Error(ErrorCode::MalformedJson, origin + ": 'queries' is not a list");
  std::set<std::int64_t> seen;
  for (const auto& q : out.queries) seen.insert(q.query_id);
  for (std::size_t i = 0; i < list.size(); ++i) {
    QueryRecord q = parse_query(list[i], i, origin);
    if (!seen.insert(q.query_id).second) throw Error(ErrorCode::DuplicateId, std::to_string(q.query_id));
    out.queries.push_back(std::move(q));
  }
}

inline void append_documents(const json& list, const std::string& origin, Dataset& out) {
  if (!list.is_array()) throw Error(ErrorCode::MalformedJson, origin + ": 'documents' is not a list");
  std::set<std::string> seen;
  for (const auto& d : out.documents) seen.insert(d.doc_id);
  for (std::size_t i = 0; i < list.size(); ++i) {
    DocumentRecord d = parse_document(list[i], i, origin);
    if (!seen.insert(d.doc_id).second) throw Error(ErrorCode::DuplicateId, d.doc_id);
    out.documents.push_back(std::move(d));
  }
}

}  // namespace detail

/// Accepts the query-list shape (a JSON array of {query_id, text, metadata,
/// gt_answer}), the document-list shape (array of {doc_id, title, text,
/// metadata}), or an object {"queries": [...], "documents": [...]}.
inline Dataset parse_dataset(const json& doc, const std::string& origin = "<dataset>") {
  Dataset out;
  if (doc.is_array()) {
    if (doc.empty()) return out;
    const json& first = doc.front();
    if (first.is_object() && first.contains("doc_id") && !first.contains("query_id"))
      detail::append_documents(doc, origin, out);
    else
      detail::append_queries(doc, origin, out);
    return out;
  }
  if (doc.is_object()) {
    if (auto q = doc.find("queries"); q != doc.end()) detail::append_queries(*q, origin, out);
    if (auto d = doc.find("documents"); d != doc.end()) detail::append_documents(*d, origin, out);
    if (!doc.contains("queries") && !doc.contains("documents"))
      throw Error(ErrorCode::MalformedJson, origin + ": expected a list or an object with 'queries'/'documents'");
    return out;
  }
  throw Error(ErrorCode::MalformedJson, origin + ": expected a list or object at top level");
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(load_json_file(path), path.string());
}

/// Loads queries from one file and documents from another (the two listings
/// of the BioASQ example are separate files).
inline Dataset load_dataset(const std::filesystem::path& queries_path,
                            const std::filesystem::path& documents_path) {
  Dataset out = load_dataset(queries_path);
  Dataset docs = load_dataset(documents_path);
  std::set<std::string> seen;
  for (const auto& d : out.documents) seen.insert(d.doc_id);
  for (auto& d : docs.documents) {
    if (!seen.insert(d.doc_id).second) throw Error(ErrorCode::DuplicateId, d.doc_id);
    out.documents.push_back(std::move(d));
  }
  return out;
}

inline json to_json(const QueryRecord& q) {
  json meta = json::object();
  for (const auto& [k, v] : q.metadata) meta[k] = v;
  return {{"query_id", q.query_id}, {"text", q.text}, {"metadata", meta}, {"gt_answer", q.gt_answer}};
}

inline json to_json(const DocumentRecord& d) {
  json meta = json::object();
  for (const auto& [k, v] : d.metadata) meta[k] = v;
  return {{"title", d.title}, {"text", d.text}, {"metadata", meta}, {"doc_id", d.doc_id}};
}

inline json to_json(const Dataset& ds) {
  json q = json::array(), d = json::array();
  for (const auto& r : ds.queries) q.push_back(to_json(r));
  for (const auto& r : ds.documents) d.push_back(to_json(r));
  return {{"queries", q}, {"documents", d}};
}

// ---------------------------------------------------------------------------
// Result files
// ---------------------------------------------------------------------------

struct ScoredRecord {
  std::optional<std::int64_t> query_id;
  MetricVector scores;

  friend bool operator==(const ScoredRecord&, const ScoredRecord&) = default;
};

/// Per-system scores, one record per query, in file order.
struct SystemRun {
  std::string system_label;
  std::vector<ScoredRecord> records;
  std::string source_path;
  /// Items skipped while loading.
  std::size_t warnings = 0;
  std::vector<std::string> warning_messages;
  /// Queries whose evaluation failed and were recorded as missing.
  std::vector<std::int64_t> missing_query_ids;

  bool has_query_ids() const {
    return !records.empty() &&
           std::all_of(records.begin(), records.end(), [](const ScoredRecord& r) { return r.query_id.has_value(); });
  }
};

struct LoadOptions {
  /// Upgrade skip-with-warning to an InvalidItem error.
  bool strict = false;
};

/// Maps a [0,1] score onto the 0-100 wire scale. Picks the shortest decimal
/// whose division by 100 reproduces the input exactly, so that writing and
/// re-reading a run is lossless.
inline double to_wire_scale(double normalized) {
  const double scaled = normalized * 100.0;
  double p = 1.0;
  for (int digits = 0; digits <= 15; ++digits, p *= 10.0) {
    const double candidate = std::round(scaled * p) / p;
    if (candidate / 100.0 == normalized) return candidate;
  }
  double up = scaled, down = scaled;
  for (int step = 0; step < 256; ++step) {
    if (up / 100.0 == normalized) return up;
    if (down / 100.0 == normalized) return down;
    up = std::nextafter(up, 200.0);
    down = std::nextafter(down, -100.0);
  }
  return scaled;
}

namespace detail {

/// Shortest round-trip decimal of `x` with the decimal point moved `shift`
/// places to the right. The result is exact decimal arithmetic, so shifting
/// back and parsing recovers `x` bit for bit.
inline std::string shifted_decimal(double x, int shift) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::scientific);
  std::string_view s(buf, static_cast<std::size_t>(res.ptr - buf));
  std::string sign;
  if (!s.empty() && s.front() == '-') {
    sign = "-";
    s.remove_prefix(1);
  }
  const auto e = s.find('e');
  int exponent = 0;
  std::from_chars(s.data() + e + 1 + (s[e + 1] == '+'), s.data() + s.size(), exponent);
  std::string digits;
  for (char c : s.substr(0, e))
    if (c != '.') digits += c;
  if (digits == "0") return "0";
  // Digits before the decimal point once shifted.
  const long point = static_cast<long>(exponent) + shift + 1;
  const long len = static_cast<long>(digits.size());
  if (point < -5 || point > 21) {
    std::string out = sign + digits.substr(0, 1);
    if (len > 1) out += "." + digits.substr(1);
    return out + "e" + std::to_string(point - 1);
  }
  if (point <= 0) return sign + "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
  if (point >= len) return sign + digits + std::string(static_cast<std::size_t>(point - len), '0');
  return sign + digits.substr(0, static_cast<std::size_t>(point)) + "." + digits.substr(static_cast<std::size_t>(point));
}

/// Parses a JSON number literal scaled by 10^shift without an intermediate
/// rounding step.
inline double parse_shifted(std::string_view literal, int shift) {
  std::string text(literal);
  int exponent = 0;
  if (const auto e = text.find_first_of("eE"); e != std::string::npos) {
    const char* first = text.data() + e + 1;
    if (*first == '+') ++first;
    std::from_chars(first, text.data() + text.size(), exponent);
    text.resize(e);
  }
  text += "e" + std::to_string(exponent + shift);
  double v = 0;
  std::from_chars(text.data(), text.data() + text.size(), v);
  return v;
}

/// Exact [0,1] values of every number sitting directly inside a "metrics"
/// object, keyed by "/<key or index>/..." paths.
using ExactScores = std::map<std::string, double>;

/// DOM builder that also records the literal text of metric scores, so the
/// 0-100 wire values can be divided by 100 in decimal rather than binary.
class WireScoreSax : public nlohmann::detail::json_sax_dom_parser<json> {
  using Base = nlohmann::detail::json_sax_dom_parser<json>;

 public:
  WireScoreSax(json& root, ExactScores& exact) : Base(root, true), exact_(exact) {}

  bool null() { return value(), Base::null(); }
  bool boolean(bool v) { return value(), Base::boolean(v); }
  bool number_integer(number_integer_t v) { return number(std::to_string(v)), Base::number_integer(v); }
  bool number_unsigned(number_unsigned_t v) { return number(std::to_string(v)), Base::number_unsigned(v); }
  bool number_float(number_float_t v, const string_t& s) { return number(s), Base::number_float(v, s); }
  bool string(string_t& v) { return value(), Base::string(v); }
  bool binary(binary_t& v) { return value(), Base::binary(v); }
  bool start_object(std::size_t n) {
    value();
    frames_.push_back({true, {}, 0, 0});
    return Base::start_object(n);
  }
  bool key(string_t& k) {
    frames_.back().key = k;
    return Base::key(k);
  }
  bool end_object() {
    frames_.pop_back();
    return Base::end_object();
  }
  bool start_array(std::size_t n) {
    value();
    frames_.push_back({false, {}, 0, 0});
    return Base::start_array(n);
  }
  bool end_array() {
    frames_.pop_back();
    return Base::end_array();
  }

 private:
  struct Frame {
    bool object;
    std::string key;
    std::size_t index;
    std::size_t next;
  };

  void value() {
    if (!frames_.empty() && !frames_.back().object) frames_.back().index = frames_.back().next++;
  }

  void number(const std::string& literal) {
    value();
    const std::size_t n = frames_.size();
    if (n < 2 || !frames_[n - 1].object || !frames_[n - 2].object || frames_[n - 2].key != "metrics") return;
    std::string path;
    for (const auto& f : frames_) path += "/" + (f.object ? f.key : std::to_string(f.index));
    exact_[path] = parse_shifted(literal, -2);
  }

  ExactScores& exact_;
  std::vector<Frame> frames_;
};

inline json parse_json_with_scores(std::string_view text, const std::string& origin, ExactScores& exact) {
  json doc;
  try {
    WireScoreSax sax(doc, exact);
    json::sax_parse(text, &sax);
  } catch (const json::parse_error& e) {
    throw malformed_json(text, origin, e);
  }
  return doc;
}

/// Converts a validated 0-100 score of item `item`, metric `name`, to [0,1].
using ScoreNormalizer = std::function<double(std::size_t item, const std::string& name, double raw)>;

inline double divide_by_100(std::size_t, const std::string&, double raw) { return raw / 100.0; }

struct ParsedItems {
  std::vector<std::optional<std::int64_t>> ids;
  std::vector<std::vector<double>> rows;
  std::size_t warnings = 0;
  std::vector<std::string> messages;
};

/// Shared item loop for CCRS and external metric files: each item is an
/// object with a "metrics" map holding 0-100 numbers; invalid items are
/// skipped with a warning unless strict.
inline ParsedItems parse_metric_items(const json& list, const std::vector<std::string>& names,
                                      const std::string& origin, const LoadOptions& opts,
                                      const ScoreNormalizer& normalize = divide_by_100) {
  ParsedItems out;
  auto warn = [&](const std::string& msg) {
    if (opts.strict) throw Error(ErrorCode::InvalidItem, origin + ": " + msg);
    ++out.warnings;
    out.messages.push_back(msg);
  };
  for (std::size_t i = 0; i < list.size(); ++i) {
    const json& item = list[i];
    const std::string at = "item " + std::to_string(i);
    if (!item.is_object() || !item.contains("metrics") || !item["metrics"].is_object()) {
      warn("invalid item format at index " + std::to_string(i));
      continue;
    }
    const json& metrics = item["metrics"];
    std::vector<double> row;
    row.reserve(names.size());
    bool valid = true;
    for (const auto& name : names) {
      auto it = metrics.find(name);
      if (it == metrics.end()) {
        warn("metric '" + name + "' not found for " + at);
        valid = false;
        break;
      }
      // Booleans are not scores even though some JSON tooling treats them as numbers.
      if (!it->is_number()) {
        warn("non-numeric score for metric '" + name + "' " + at);
        valid = false;
        break;
      }
      const double raw = it->get<double>();
      if (!(raw >= 0.0 && raw <= 100.0)) {
        warn("score " + it->dump() + " outside [0,100] for metric '" + name + "' " + at);
        valid = false;
        break;
      }
      row.push_back(normalize(i, name, raw));
    }
    if (!valid) continue;
    std::optional<std::int64_t> id;
    if (auto q = item.find("query_id"); q != item.end() && q->is_number_integer()) id = q->get<std::int64_t>();
    out.ids.push_back(id);
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline const json& results_list(const json& doc, std::initializer_list<std::string_view> keys,
                                const std::string& origin) {
  if (!doc.is_object()) throw Error(ErrorCode::MissingKey, std::string(*keys.begin()) + " in " + origin);
  for (auto key : keys) {
    auto it = doc.find(std::string(key));
    if (it == doc.end()) continue;
    if (!it->is_array()) throw Error(ErrorCode::NotAList, "'" + std::string(key) + "' in " + origin);
    return *it;
  }
  throw Error(ErrorCode::MissingKey, std::string(*keys.begin()) + " in " + origin);
}

}  // namespace detail

namespace detail {

inline SystemRun parse_results_impl(const json& doc, const std::string& label, const std::string& origin,
                                    const LoadOptions& opts, const ExactScores* exact) {
  const json& all = detail::results_list(doc, {"ccrs_results"}, origin);
  SystemRun run;
  if (auto meta = doc.find("meta"); meta != doc.end() && meta->is_object()) {
    if (auto missing = meta->find("missing_query_ids"); missing != meta->end() && missing->is_array())
      for (const auto& id : *missing)
        if (id.is_number_integer()) run.missing_query_ids.push_back(id.get<std::int64_t>());
  }
  // Placeholders written for failed queries are expected, not malformed.
  json list = json::array();
  std::vector<std::size_t> source_index;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const json& item = all[i];
    if (item.is_object() && item.contains("query_id") && item["query_id"].is_number_integer() &&
        std::find(run.missing_query_ids.begin(), run.missing_query_ids.end(),
                  item["query_id"].get<std::int64_t>()) != run.missing_query_ids.end())
      continue;
    list.push_back(item);
    source_index.push_back(i);
  }
  const std::vector<std::string> names(kMetricKeys.begin(), kMetricKeys.end());
  ScoreNormalizer normalize = divide_by_100;
  if (exact)
    normalize = [&](std::size_t item, const std::string& name, double raw) {
      auto it = exact->find("/ccrs_results/" + std::to_string(source_index[item]) + "/metrics/" + name);
      return it == exact->end() ? raw / 100.0 : it->second;
    };
  auto parsed = parse_metric_items(list, names, origin, opts, normalize);
  if (parsed.rows.empty() && !list.empty()) throw Error(ErrorCode::AllItemsInvalid, origin);
  run.system_label = label;
  run.source_path = origin;
  run.warnings = parsed.warnings;
  run.warning_messages = std::move(parsed.messages);
  for (std::size_t i = 0; i < parsed.rows.size(); ++i) {
    ScoredRecord rec;
    rec.query_id = parsed.ids[i];
    for (Metric m : kAllMetrics) rec.scores.set(m, parsed.rows[i][index_of(m)]);
    run.records.push_back(rec);
  }
  return run;
}

}  // namespace detail

/// Builds a run from an in-memory result document; scores are divided by 100.
inline SystemRun parse_results(const json& doc, const std::string& label, const std::string& origin,
                               const LoadOptions& opts = {}) {
  return detail::parse_results_impl(doc, label, origin, opts, nullptr);
}

/// Reads a `{"ccrs_results": [{"metrics": {...}}]}` file; scores are divided
/// by 100. The optional "meta" key is ignored apart from the missing-query list.
inline SystemRun load_results_file(const std::filesystem::path& path, std::string label = {},
                                   const LoadOptions& opts = {}) {
  if (label.empty()) label = path.stem().string();
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  const std::string text = read_text_file(path);
  detail::ExactScores exact;
  const json doc = detail::parse_json_with_scores(text, path.string(), exact);
  return detail::parse_results_impl(doc, label, path.string(), opts, &exact);
}

/// Serializes a run to the result-file schema (0-100 scale). Records of
/// queries whose evaluation failed are emitted with null metrics so that
/// loaders skip them.
inline json results_to_json(const SystemRun& run, const json& meta = json()) {
  json doc = json::object();
  if (!meta.is_null()) doc["meta"] = meta;
  if (!run.missing_query_ids.empty()) doc["meta"]["missing_query_ids"] = run.missing_query_ids;
  json list = json::array();
  for (const auto& rec : run.records) {
    json metrics = json::object();
    for (Metric m : kAllMetrics) metrics[std::string(key_of(m))] = to_wire_scale(rec.scores.get(m));
    json item = {{"metrics", metrics}};
    if (rec.query_id) item["query_id"] = *rec.query_id;
    list.push_back(std::move(item));
  }
  for (auto id : run.missing_query_ids) {
    json metrics = json::object();
    for (Metric m : kAllMetrics) metrics[std::string(key_of(m))] = nullptr;
    list.push_back({{"query_id", id}, {"metrics", metrics}});
  }
  doc["ccrs_results"] = std::move(list);
  return doc;
}

/// Result-file text. Laid out like results_to_json(...).dump(2), but scores
/// are written as exact decimals so load_results_file returns the same run.
inline std::string results_to_text(const SystemRun& run, const json& meta = json()) {
  std::vector<std::pair<std::string, Metric>> keys;
  for (Metric m : kAllMetrics) keys.emplace_back(std::string(key_of(m)), m);
  std::sort(keys.begin(), keys.end());

  std::string out = "{\n  \"ccrs_results\": [";
  bool first = true;
  auto item = [&](const std::optional<std::int64_t>& id, const MetricVector* scores) {
    out += first ? "\n" : ",\n";
    first = false;
    out += "    {\n      \"metrics\": {\n";
    for (std::size_t k = 0; k < keys.size(); ++k) {
      out += "        " + json(keys[k].first).dump() + ": ";
      out += scores ? detail::shifted_decimal(scores->get(keys[k].second), 2) : "null";
      out += k + 1 < keys.size() ? ",\n" : "\n";
    }
    out += "      }";
    if (id) out += ",\n      \"query_id\": " + std::to_string(*id);
    out += "\n    }";
  };
  for (const auto& rec : run.records) item(rec.query_id, &rec.scores);
  for (auto id : run.missing_query_ids) item(id, nullptr);
  out += first ? "]" : "\n  ]";

  json m = meta.is_null() ? json() : meta;
  if (!run.missing_query_ids.empty()) m["missing_query_ids"] = run.missing_query_ids;
  if (!m.is_null()) {
    std::string body = m.dump(2);
    std::string indented;
    for (char c : body) {
      indented += c;
      if (c == '\n') indented += "  ";
    }
    out += ",\n  \"meta\": " + indented;
  }
  return out + "\n}\n";
}

inline void write_results_file(const std::filesystem::path& path, const SystemRun& run, const json& meta = json()) {
  write_text_file(path, results_to_text(run, meta));
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

/// (query, metric, system) scores in [0,1]; NaN marks a missing entry.
struct ScoreTensor {
  std::vector<std::int64_t> query_ids;
  std::vector<std::string> metric_names;
  std::vector<std::string> system_labels;
  std::vector<double> scores;

  std::size_t num_queries() const { return query_ids.size(); }
  std::size_t num_metrics() const { return metric_names.size(); }
  std::size_t num_systems() const { return system_labels.size(); }

  double& at(std::size_t q, std::size_t k, std::size_t s) {
    return scores[(q * num_metrics() + k) * num_systems() + s];
  }
  double at(std::size_t q, std::size_t k, std::size_t s) const {
    return scores[(q * num_metrics() + k) * num_systems() + s];
  }

  /// N x M slice for one metric.
  ScoreMatrix metric_matrix(std::size_t k) const {
    ScoreMatrix m(num_queries(), num_systems());
    for (std::size_t q = 0; q < num_queries(); ++q)
      for (std::size_t s = 0; s < num_systems(); ++s) m(q, s) = at(q, k, s);
    return m;
  }

  std::vector<double> column(std::size_t k, std::size_t s) const {
    std::vector<double> out(num_queries());
    for (std::size_t q = 0; q < num_queries(); ++q) out[q] = at(q, k, s);
    return out;
  }

  std::optional<std::size_t> system_index(std::string_view label) const {
    for (std::size_t s = 0; s < system_labels.size(); ++s)
      if (system_labels[s] == label) return s;
    return std::nullopt;
  }
  std::optional<std::size_t> metric_index(std::string_view name) const {
    for (std::size_t k = 0; k < metric_names.size(); ++k)
      if (metric_names[k] == name) return k;
    return std::nullopt;
  }
};

/// Scores from an external framework (e.g. claim-level precision / recall /
/// faithfulness) aligned like a ScoreTensor.
struct ExternalMetricSet : ScoreTensor {};

/// One externally produced score file: a label, its metric names and rows.
struct ExternalRun {
  std::string system_label;
  std::vector<std::string> metric_names;
  std::vector<std::optional<std::int64_t>> query_ids;
  std::vector<std::vector<double>> rows;
  std::size_t warnings = 0;
};

namespace detail {

struct RowView {
  std::string label;
  std::vector<std::optional<std::int64_t>> ids;
  std::vector<const std::vector<double>*> rows;
};

inline void fill_tensor(ScoreTensor& t, const std::vector<std::vector<std::vector<double>>>& per_system,
                        const std::vector<std::vector<std::optional<std::int64_t>>>& ids) {
  const std::size_t nsys = per_system.size();
  const std::size_t nmet = t.metric_names.size();
  for (std::size_t s = 0; s < nsys; ++s) {
    if (per_system[s].empty()) throw Error(ErrorCode::EmptyRun, t.system_labels[s]);
  }
  const bool by_id = std::all_of(ids.begin(), ids.end(), [](const auto& v) {
    return std::all_of(v.begin(), v.end(), [](const auto& id) { return id.has_value(); });
  });
  if (by_id) {
    // Union of ids, in first-seen order across systems.
    std::unordered_map<std::int64_t, std::size_t> pos;
    for (const auto& v : ids)
      for (const auto& id : v)
        if (pos.emplace(*id, t.query_ids.size()).second) t.query_ids.push_back(*id);
    t.scores.assign(t.query_ids.size() * nmet * nsys, kMissing);
    for (std::size_t s = 0; s < nsys; ++s) {
      std::set<std::int64_t> seen;
      for (std::size_t r = 0; r < per_system[s].size(); ++r) {
        const auto id = *ids[s][r];
        if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, t.system_labels[s] + ": " + std::to_string(id));
        for (std::size_t k = 0; k < nmet; ++k) t.at(pos[id], k, s) = per_system[s][r][k];
      }
    }
    return;
  }
  const std::size_t n = per_system.front().size();
  bool mismatch = false;
  for (const auto& rows : per_system) mismatch |= rows.size() != n;
  if (mismatch) {
    std::string detail;
    for (std::size_t s = 0; s < nsys; ++s)
      detail += (s ? ", " : "") + t.system_labels[s] + "=" + std::to_string(per_system[s].size());
    throw Error(ErrorCode::SampleCountMismatch, detail);
  }
  for (std::size_t q = 0; q < n; ++q) {
    const auto& first_id = ids.front()[q];
    t.query_ids.push_back(first_id ? *first_id : static_cast<std::int64_t>(q));
  }
  t.scores.assign(n * nmet * nsys, kMissing);
  for (std::size_t s = 0; s < nsys; ++s)
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t k = 0; k < nmet; ++k) t.at(q, k, s) = per_system[s][q][k];
}

}  // namespace detail

/// Aligns runs into one tensor. Alignment is positional (record i of every
/// run is query i) unless every record of every run carries a query_id, in
/// which case rows are matched by id and absent entries become missing.
inline ScoreTensor align_systems(const std::vector<SystemRun>& runs) {
  if (runs.size() < 2) throw Error(ErrorCode::Config, "align_systems needs at least 2 runs");
  ScoreTensor t;
  t.metric_names.assign(kMetricAbbrev.begin(), kMetricAbbrev.end());
  std::vector<std::vector<std::vector<double>>> rows(runs.size());
  std::vector<std::vector<std::optional<std::int64_t>>> ids(runs.size());
  std::set<std::string> labels;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    if (!labels.insert(runs[s].system_label).second)
      throw Error(ErrorCode::Config, "duplicate system label " + runs[s].system_label);
    t.system_labels.push_back(runs[s].system_label);
    for (const auto& rec : runs[s].records) {
      std::vector<double> row(kMetricCount);
      for (Metric m : kAllMetrics) row[index_of(m)] = rec.scores.get(m);
      rows[s].push_back(std::move(row));
      ids[s].push_back(rec.query_id);
    }
  }
  detail::fill_tensor(t, rows, ids);
  return t;
}

/// Single-run tensor, for univariate analysis of one system.
inline ScoreTensor single_system_tensor(const SystemRun& run) {
  ScoreTensor t;
  t.metric_names.assign(kMetricAbbrev.begin(), kMetricAbbrev.end());
  t.system_labels = {run.system_label};
  std::vector<std::vector<std::vector<double>>> rows(1);
  std::vector<std::vector<std::optional<std::int64_t>>> ids(1);
  for (const auto& rec : run.records) {
    std::vector<double> row(kMetricCount);
    for (Metric m : kAllMetrics) row[index_of(m)] = rec.scores.get(m);
    rows[0].push_back(std::move(row));
    ids[0].push_back(rec.query_id);
  }
  detail::fill_tensor(t, rows, ids);
  return t;
}

/// Loads an external metric file. Accepts top-level "results" or
/// "ccrs_results"; when `names` is empty the metric names are taken from the
/// first well-formed item (sorted).
inline ExternalRun load_external_metrics_file(const std::filesystem::path& path, std::string label = {},
                                              std::vector<std::string> names = {},
                                              const LoadOptions& opts = {}) {
  if (label.empty()) label = path.stem().string();
  const json doc = load_json_file(path);
  const json& list = detail::results_list(doc, {"results", "ccrs_results"}, path.string());
  if (names.empty()) {
    for (const auto& item : list)
      if (item.is_object() && item.contains("metrics") && item["metrics"].is_object()) {
        for (auto& [k, v] : item["metrics"].items()) names.push_back(k);
        break;
      }
    std::sort(names.begin(), names.end());
  }
  auto parsed = detail::parse_metric_items(list, names, path.string(), opts);
  if (parsed.rows.empty() && !list.empty()) throw Error(ErrorCode::AllItemsInvalid, path.string());
  return ExternalRun{label, names, std::move(parsed.ids), std::move(parsed.rows), parsed.warnings};
}

inline ExternalMetricSet align_external(const std::vector<ExternalRun>& runs) {
  if (runs.empty()) throw Error(ErrorCode::Config, "align_external needs at least 1 run");
  ExternalMetricSet t;
  t.metric_names = runs.front().metric_names;
  std::vector<std::vector<std::vector<double>>> rows;
  std::vector<std::vector<std::optional<std::int64_t>>> ids;
  for (const auto& r : runs) {
    if (r.metric_names != t.metric_names)
      throw Error(ErrorCode::Config, "external metric names differ for " + r.system_label);
    t.system_labels.push_back(r.system_label);
    rows.push_back(r.rows);
    ids.push_back(r.query_ids);
  }
  detail::fill_tensor(t, rows, ids);
  return t;
}

}  // namespace ccrs

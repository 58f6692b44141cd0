#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccrs/error.hpp"
#include "ccrs/inference.hpp"
#include "ccrs/judge.hpp"
#include "ccrs/metrics.hpp"
#include "ccrs/pipeline.hpp"
#include "ccrs/records.hpp"
#include "ccrs/statkit.hpp"
#include "ccrs/util.hpp"

namespace ccrs::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kIngestionError = 3,
  kEndpointError = 4,
  kComputationError = 5,
};

inline int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Configuration: return kConfigError;
    case ErrorCategory::Ingestion: return kIngestionError;
    case ErrorCategory::Endpoint: return kEndpointError;
    case ErrorCategory::Computation: return kComputationError;
  }
  return kComputationError;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct BackendSpec {
  /// "mock" or "http".
  std::string backend = "mock";
  EndpointConfig endpoint;
  /// Vector size of the offline hashing embedding.
  std::size_t dim = 256;
};

struct SystemSpec {
  std::string label;
  /// Pre-scored result file (analyze / hypotheses only).
  std::optional<fs::path> results;
  /// Pre-generated RAG outputs to be judged.
  std::optional<fs::path> responses;
  /// "bm25" or "dense": generate responses with the built-in pipeline.
  std::optional<std::string> retriever;
};

struct RunManifest {
  fs::path dataset_path;
  std::optional<fs::path> documents_path;
  std::uint64_t seed = 0;
  fs::path output_dir = "ccrs_out";
  BackendSpec judge, reader, embedding;
  ChunkingConfig chunking;
  std::size_t top_k = 20;
  double bm25_k1 = 1.2, bm25_b = 0.75;
  AcConfig ac;
  FailurePolicy failure_policy = FailurePolicy::Missing;
  std::size_t concurrency = 1;
  std::vector<SystemSpec> systems;
  InferenceConfig inference;
  HypothesisSpec hypotheses;
  bool strict = false;
  /// Effective manifest (after flag overrides) in canonical form.
  json canonical = json::object();

  std::string config_hash() const { return hex64(fnv1a64(canonical.dump())); }
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::Config, where + "." + key + " has the wrong type");
  }
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw Error(ErrorCode::Config, "unknown key '" + k + "' in " + where);
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline BackendSpec parse_backend(const json& j, const std::string& where) {
  BackendSpec b;
  if (j.is_null()) return b;
  if (!j.is_object()) throw Error(ErrorCode::Config, where + " must be an object");
  reject_unknown(j, {"backend", "base_url", "model", "timeout_ms", "max_retries", "temperature", "api_key_env",
                     "max_tokens", "dim"},
                 where);
  b.backend = get_or<std::string>(j, "backend", "mock", where);
  if (b.backend != "mock" && b.backend != "http") throw Error(ErrorCode::Config, where + ".backend must be mock|http");
  auto& e = b.endpoint;
  e.base_url = get_or<std::string>(j, "base_url", e.base_url, where);
  e.model_name = get_or<std::string>(j, "model", e.model_name, where);
  e.timeout = std::chrono::milliseconds(get_or<long long>(j, "timeout_ms", e.timeout.count(), where));
  e.max_retries = get_or<int>(j, "max_retries", e.max_retries, where);
  e.temperature = get_or<double>(j, "temperature", e.temperature, where);
  e.api_key_env = get_or<std::string>(j, "api_key_env", e.api_key_env, where);
  if (j.contains("max_tokens") && !j["max_tokens"].is_null()) e.max_tokens = get_or<int>(j, "max_tokens", 0, where);
  b.dim = get_or<std::size_t>(j, "dim", b.dim, where);
  e.validate();
  if (b.dim == 0) throw Error(ErrorCode::Config, where + ".dim must be > 0");
  return b;
}

inline std::vector<std::pair<std::string, std::string>> parse_pairs(const json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::Config, where + " must be a list of [a, b] pairs");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
      throw Error(ErrorCode::Config, where + " entries must be [label, label]");
    out.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
  }
  return out;
}

}  // namespace detail

/// Builds a manifest from JSON. Relative paths resolve against `base_dir`.
/// Required paths are checked for existence here, before any work starts.
inline RunManifest parse_manifest(const json& j, const fs::path& base_dir = {}) {
  using detail::get_or;
  if (!j.is_object()) throw Error(ErrorCode::Config, "manifest must be a JSON object");
  detail::reject_unknown(j, {"dataset", "documents", "seed", "output_dir", "judge", "reader", "embedding", "pipeline",
                             "ac", "failure_policy", "concurrency", "systems", "inference", "hypotheses", "strict"},
                         "manifest");
  RunManifest m;
  if (auto d = j.find("dataset"); d != j.end() && !d->is_null()) {
    if (!d->is_string()) throw Error(ErrorCode::Config, "dataset must be a path");
    m.dataset_path = detail::resolve(base_dir, d->get<std::string>());
  }
  if (auto d = j.find("documents"); d != j.end() && !d->is_null())
    m.documents_path = detail::resolve(base_dir, d->get<std::string>());
  m.seed = get_or<std::uint64_t>(j, "seed", 0, "manifest");
  m.output_dir = detail::resolve(base_dir, get_or<std::string>(j, "output_dir", "ccrs_out", "manifest"));
  m.judge = detail::parse_backend(j.value("judge", json()), "judge");
  m.reader = detail::parse_backend(j.value("reader", json()), "reader");
  m.embedding = detail::parse_backend(j.value("embedding", json()), "embedding");

  const json pipe = j.value("pipeline", json::object());
  detail::reject_unknown(pipe, {"chunk_tokens", "overlap", "top_k", "bm25_k1", "bm25_b"}, "pipeline");
  m.chunking.chunk_tokens = get_or<std::size_t>(pipe, "chunk_tokens", m.chunking.chunk_tokens, "pipeline");
  m.chunking.overlap_fraction = get_or<double>(pipe, "overlap", m.chunking.overlap_fraction, "pipeline");
  m.top_k = get_or<std::size_t>(pipe, "top_k", m.top_k, "pipeline");
  m.bm25_k1 = get_or<double>(pipe, "bm25_k1", m.bm25_k1, "pipeline");
  m.bm25_b = get_or<double>(pipe, "bm25_b", m.bm25_b, "pipeline");
  m.chunking.validate();
  Bm25Config{m.bm25_k1, m.bm25_b, m.top_k}.validate();

  const json ac = j.value("ac", json::object());
  detail::reject_unknown(ac, {"lambda", "em_normalization"}, "ac");
  m.ac.lambda = get_or<double>(ac, "lambda", m.ac.lambda, "ac");
  const auto norm = get_or<std::string>(ac, "em_normalization", "casefold_trim", "ac");
  if (norm == "exact") m.ac.normalization = EmNormalization::Exact;
  else if (norm == "casefold_trim") m.ac.normalization = EmNormalization::CasefoldTrim;
  else throw Error(ErrorCode::Config, "ac.em_normalization must be exact|casefold_trim");
  m.ac.validate();

  const auto policy = get_or<std::string>(j, "failure_policy", "missing", "manifest");
  if (policy == "missing") m.failure_policy = FailurePolicy::Missing;
  else if (policy == "zero") m.failure_policy = FailurePolicy::Zero;
  else if (policy == "propagate") m.failure_policy = FailurePolicy::Propagate;
  else throw Error(ErrorCode::Config, "failure_policy must be missing|zero|propagate");
  m.concurrency = get_or<std::size_t>(j, "concurrency", 1, "manifest");
  m.strict = get_or<bool>(j, "strict", false, "manifest");

  if (auto s = j.find("systems"); s != j.end()) {
    if (!s->is_array()) throw Error(ErrorCode::Config, "systems must be a list");
    for (const auto& item : *s) {
      if (!item.is_object()) throw Error(ErrorCode::Config, "each system must be an object");
      detail::reject_unknown(item, {"label", "results", "responses", "retriever"}, "systems[]");
      SystemSpec spec;
      spec.label = get_or<std::string>(item, "label", "", "systems[]");
      if (spec.label.empty()) throw Error(ErrorCode::Config, "system without a label");
      for (const auto& other : m.systems)
        if (other.label == spec.label) throw Error(ErrorCode::Config, "duplicate system label " + spec.label);
      if (item.contains("results")) spec.results = detail::resolve(base_dir, item["results"].get<std::string>());
      if (item.contains("responses")) spec.responses = detail::resolve(base_dir, item["responses"].get<std::string>());
      if (item.contains("retriever")) {
        spec.retriever = item["retriever"].get<std::string>();
        if (*spec.retriever != "bm25" && *spec.retriever != "dense")
          throw Error(ErrorCode::Config, spec.label + ": retriever must be bm25|dense");
      }
      m.systems.push_back(std::move(spec));
    }
  }

  const json inf = j.value("inference", json::object());
  detail::reject_unknown(inf, {"B", "alpha", "threads", "estimator"}, "inference");
  m.inference.B = get_or<std::size_t>(inf, "B", m.inference.B, "inference");
  m.inference.alpha = get_or<double>(inf, "alpha", m.inference.alpha, "inference");
  m.inference.threads = get_or<std::size_t>(inf, "threads", 0, "inference");
  const auto est = get_or<std::string>(inf, "estimator", "count/B", "inference");
  if (est == "plus_one") m.inference.plus_one_estimator = true;
  else if (est != "count/B") throw Error(ErrorCode::Config, "inference.estimator must be count/B|plus_one");
  m.inference.validate();

  if (auto h = j.find("hypotheses"); h != j.end() && h->is_object()) {
    detail::reject_unknown(*h, {"metrics", "h1_pairs", "h2_pairs", "h2_metrics", "h3_pairs"}, "hypotheses");
    if (h->contains("metrics")) m.hypotheses.metrics = (*h)["metrics"].get<std::vector<std::string>>();
    if (h->contains("h1_pairs")) m.hypotheses.h1_pairs = detail::parse_pairs((*h)["h1_pairs"], "hypotheses.h1_pairs");
    if (h->contains("h2_pairs")) m.hypotheses.h2_pairs = detail::parse_pairs((*h)["h2_pairs"], "hypotheses.h2_pairs");
    if (h->contains("h3_pairs")) m.hypotheses.h3_pairs = detail::parse_pairs((*h)["h3_pairs"], "hypotheses.h3_pairs");
    if (h->contains("h2_metrics")) m.hypotheses.h2_metrics = (*h)["h2_metrics"].get<std::vector<std::string>>();
  }
  m.canonical = j;
  return m;
}

inline RunManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = load_json_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, std::string("manifest: ") + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

/// Applies command-line overrides and refreshes the canonical form.
inline void apply_overrides(RunManifest& m, std::optional<std::uint64_t> seed, std::optional<fs::path> out, bool strict) {
  if (seed) {
    m.seed = *seed;
    m.canonical["seed"] = *seed;
  }
  if (out) {
    m.output_dir = *out;
    m.canonical["output_dir"] = out->string();
  }
  if (strict) {
    m.strict = true;
    m.canonical["strict"] = true;
  }
  m.inference.seed = m.seed;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Provenance block embedded in every artifact. `created_at` is the only
/// field that differs between identical runs.
inline json artifact_meta(const RunManifest& m, std::string_view kind) {
  return {{"artifact", std::string(kind)},
          {"seed", m.seed},
          {"config_hash", m.config_hash()},
          {"created_at", utc_timestamp()}};
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

inline fs::path results_path(const RunManifest& m, const std::string& label) {
  return m.output_dir / (label + "-results.json");
}

inline std::unique_ptr<JudgeBackend> make_judge(const RunManifest& m) {
  if (m.judge.backend == "http") return std::make_unique<HttpJudge>(m.judge.endpoint);
  return std::make_unique<MockJudge>(m.seed);
}

inline std::unique_ptr<ReaderBackend> make_reader(const RunManifest& m) {
  if (m.reader.backend == "http") return std::make_unique<HttpReader>(m.reader.endpoint);
  return std::make_unique<ExtractiveMockReader>(m.seed);
}

inline std::shared_ptr<const EmbeddingBackend> make_embedding(const RunManifest& m) {
  if (m.embedding.backend == "http") return std::make_shared<HttpEmbedding>(m.embedding.endpoint);
  return std::make_shared<HashingEmbedding>(m.embedding.dim, m.seed);
}

inline Dataset load_manifest_dataset(const RunManifest& m) {
  if (m.dataset_path.empty()) throw Error(ErrorCode::Config, "manifest has no dataset path");
  if (!fs::exists(m.dataset_path)) throw Error(ErrorCode::Config, "dataset not found: " + m.dataset_path.string());
  if (m.documents_path) {
    if (!fs::exists(*m.documents_path))
      throw Error(ErrorCode::Config, "documents not found: " + m.documents_path->string());
    return load_dataset(m.dataset_path, *m.documents_path);
  }
  return load_dataset(m.dataset_path);
}

/// Generates (if needed) and judges every system; returns the written result files.
inline std::vector<fs::path> cmd_evaluate(const RunManifest& m, std::ostream& log) {
  // Validate everything before doing any work.
  const Dataset ds = load_manifest_dataset(m);
  if (m.systems.empty()) throw Error(ErrorCode::Config, "manifest lists no systems");
  for (const auto& s : m.systems) {
    if (!s.responses && !s.retriever && !s.results)
      throw Error(ErrorCode::Config, s.label + ": needs responses, retriever or results");
    if (s.responses && !fs::exists(*s.responses))
      throw Error(ErrorCode::Config, s.label + ": responses not found: " + s.responses->string());
  }

  const auto judge = make_judge(m);
  const auto reader = make_reader(m);
  std::vector<Chunk> chunks;
  std::unique_ptr<Retriever> bm25, dense;
  auto retriever_for = [&](const std::string& kind) -> const Retriever& {
    if (chunks.empty()) {
      if (ds.documents.empty()) throw Error(ErrorCode::Config, "retrieval needs documents in the dataset");
      chunks = chunk_corpus(ds.documents, m.chunking);
    }
    if (kind == "bm25") {
      if (!bm25) bm25 = std::make_unique<Bm25Retriever>(chunks, m.bm25_k1, m.bm25_b);
      return *bm25;
    }
    if (!dense) dense = std::make_unique<DenseRetriever>(chunks, make_embedding(m));
    return *dense;
  };

  EvaluationConfig ecfg;
  ecfg.ac = m.ac;
  ecfg.judge = JudgeSettings::from(m.judge.endpoint);
  ecfg.on_failure = m.failure_policy;
  ecfg.concurrency = m.concurrency;

  std::vector<fs::path> written;
  for (const auto& s : m.systems) {
    std::vector<RagOutput> outputs;
    if (s.responses) {
      outputs = load_rag_outputs(*s.responses);
    } else if (s.retriever) {
      const Retriever& r = retriever_for(*s.retriever);
      for (const auto& q : ds.queries) outputs.push_back(run_rag(q, r, *reader, m.top_k));
      write_rag_outputs(m.output_dir / (s.label + "-responses.json"), outputs);
    } else {
      log << "system " << s.label << ": pre-scored results, nothing to evaluate\n";
      continue;
    }
    SystemEvaluation ev;
    try {
      ev = evaluate_system_detailed(ds.queries, outputs, *judge, ecfg, s.label);
    } catch (const Error& e) {
      throw Error(e.code(), "system " + s.label + ": " + e.what());
    }
    json meta = artifact_meta(m, "results");
    meta["system"] = s.label;
    meta["failures"] = ev.failures.size();
    const fs::path path = results_path(m, s.label);
    write_results_file(path, ev.run, meta);
    for (const auto& f : ev.failures) log << "system " << s.label << " query " << f.query_id << ": " << f.message << "\n";
    log << "system " << s.label << ": " << ev.run.records.size() << " scored, " << ev.failures.size()
        << " failed -> " << path.string() << "\n";
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct LabeledPath {
  std::string label;
  fs::path path;
};

/// "LABEL=path" or a bare path (label = file stem).
inline LabeledPath parse_labeled_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos && eq > 0) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {fs::path(arg).stem().string(), arg};
}

/// Result files named by the manifest: explicit `results`, else the file
/// `evaluate` writes for that system.
inline std::vector<LabeledPath> manifest_result_files(const RunManifest& m) {
  std::vector<LabeledPath> out;
  for (const auto& s : m.systems) out.push_back({s.label, s.results ? *s.results : results_path(m, s.label)});
  return out;
}

inline std::vector<SystemRun> load_runs(const std::vector<LabeledPath>& files, bool strict, std::ostream& log) {
  if (files.empty()) throw Error(ErrorCode::Config, "no result files given");
  std::vector<SystemRun> runs;
  for (const auto& f : files) {
    runs.push_back(load_results_file(f.path, f.label, LoadOptions{strict}));
    for (const auto& w : runs.back().warning_messages) log << "warning: " << w << "\n";
  }
  return runs;
}

namespace detail {

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json corr_json(const stats::CorrelationMatrix& c) {
  json rows = json::array();
  for (std::size_t i = 0; i < c.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < c.size(); ++j) row.push_back(opt_json(c.at(i, j)));
    rows.push_back(row);
  }
  return {{"method", std::string(stats::to_string(c.method))}, {"labels", c.labels}, {"values", rows},
          {"degenerate", c.degenerate}};
}

inline std::string csv_num(const std::optional<double>& v) {
  if (!v || std::isnan(*v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}

inline std::vector<double> wire_column(const ScoreTensor& t, std::size_t k, std::size_t s) {
  auto col = t.column(k, s);
  for (double& v : col)
    if (!std::isnan(v)) v = to_wire_scale(v);
  return col;
}

}  // namespace detail

/// Per-system, per-metric statistics on the 0-100 scale, plus correlations.
/// Writes stats.json and CSV tables into `out_dir`; returns the JSON bundle.
inline json cmd_analyze(const std::vector<SystemRun>& runs, const fs::path& out_dir, const json& meta,
                        std::ostream& log) {
  const ScoreTensor t = runs.size() == 1 ? single_system_tensor(runs.front()) : align_systems(runs);
  constexpr std::array<stats::CorrelationMethod, 3> kMethods = {
      stats::CorrelationMethod::Pearson, stats::CorrelationMethod::Spearman, stats::CorrelationMethod::Kendall};

  json systems = json::object(), correlations = json::object(), notices = json::array();
  std::map<stats::CorrelationMethod, std::vector<stats::CorrelationMatrix>> per_method;
  std::ostringstream stats_csv, bounds_csv, ties_csv;
  stats_csv << "system,metric,n,mean,geometric_mean,median,midhinge,variance,min,max,range,iqr,skewness,kurtosis\n";
  bounds_csv << "system,metric,n,count_at_zero,pct_at_zero,count_at_one,pct_at_one\n";
  ties_csv << "system,metric,tie_probability\n";

  for (std::size_t s = 0; s < t.num_systems(); ++s) {
    const std::string& label = t.system_labels[s];
    json sys = json::object();
    std::vector<std::vector<double>> cols;
    for (std::size_t k = 0; k < t.num_metrics(); ++k) {
      const std::string& metric = t.metric_names[k];
      const auto wire = detail::wire_column(t, k, s);
      const auto unit = t.column(k, s);
      const auto ps = stats::population_stats(wire);
      const auto bf = stats::bound_frequencies(unit);
      const double tie = stats::tie_probability(wire);
      const auto hist = stats::histogram(wire, 0, 100, 5);
      json e = {{"n", ps.n},
                {"mean", ps.mean},
                {"geometric_mean", ps.geometric_mean},
                {"median", ps.median},
                {"q1", ps.q1},
                {"q3", ps.q3},
                {"midhinge", ps.midhinge},
                {"variance", detail::opt_json(ps.variance)},
                {"min", ps.min},
                {"max", ps.max},
                {"range", ps.range},
                {"iqr", ps.iqr},
                {"skewness", detail::opt_json(ps.skewness)},
                {"kurtosis", detail::opt_json(ps.kurtosis)},
                {"bounds",
                 {{"n", bf.n},
                  {"count_at_zero", bf.count_at_zero},
                  {"pct_at_zero", bf.pct_at_zero},
                  {"count_at_one", bf.count_at_one},
                  {"pct_at_one", bf.pct_at_one}}},
                {"tie_probability", tie},
                {"histogram", {{"lo", hist.lo}, {"hi", hist.hi}, {"width", hist.width}, {"counts", hist.counts}}},
                {"five_number", {ps.min, ps.q1, ps.median, ps.q3, ps.max}}};
      sys[metric] = e;
      stats_csv << label << ',' << metric << ',' << ps.n << ',' << detail::csv_num(ps.mean) << ','
                << detail::csv_num(ps.geometric_mean) << ',' << detail::csv_num(ps.median) << ','
                << detail::csv_num(ps.midhinge) << ',' << detail::csv_num(ps.variance) << ','
                << detail::csv_num(ps.min) << ',' << detail::csv_num(ps.max) << ',' << detail::csv_num(ps.range)
                << ',' << detail::csv_num(ps.iqr) << ',' << detail::csv_num(ps.skewness) << ','
                << detail::csv_num(ps.kurtosis) << '\n';
      bounds_csv << label << ',' << metric << ',' << bf.n << ',' << bf.count_at_zero << ','
                 << detail::csv_num(bf.pct_at_zero) << ',' << bf.count_at_one << ',' << detail::csv_num(bf.pct_at_one)
                 << '\n';
      ties_csv << label << ',' << metric << ',' << detail::csv_num(tie) << '\n';
      cols.push_back(unit);
    }
    systems[label] = sys;
    json corr = json::object();
    for (auto method : kMethods) {
      auto cm = stats::correlation_matrix(cols, t.metric_names, method);
      for (const auto& d : cm.degenerate)
        notices.push_back("system " + label + ": " + d + " is constant; its " + std::string(stats::to_string(method)) +
                          " correlations are undefined");
      corr[std::string(stats::to_string(method))] = detail::corr_json(cm);
      per_method[method].push_back(std::move(cm));
    }
    correlations[label] = corr;
  }

  json averaged = nullptr;
  if (t.num_systems() >= 2) {
    averaged = json::object();
    for (auto method : kMethods)
      averaged[std::string(stats::to_string(method))] = detail::corr_json(stats::fisher_z_average(per_method[method]));
  } else {
    notices.push_back("single system: cross-system Fisher-Z averaging skipped");
  }
  for (const auto& n : notices) log << "notice: " << n.get<std::string>() << "\n";

  json m = meta;
  m["scale"] = "0-100";
  m["systems"] = t.system_labels;
  m["metrics"] = t.metric_names;
  m["num_queries"] = t.num_queries();
  json bundle = {{"meta", m},
                 {"systems", systems},
                 {"correlations", correlations},
                 {"fisher_z_average", averaged},
                 {"notices", notices}};

  write_text_file(out_dir / "stats.json", bundle.dump(2) + "\n");
  write_text_file(out_dir / "stats.csv", stats_csv.str());
  write_text_file(out_dir / "bounds.csv", bounds_csv.str());
  write_text_file(out_dir / "ties.csv", ties_csv.str());
  for (auto method : kMethods) {
    const std::string name(stats::to_string(method));
    std::ostringstream os;
    os << "system,metric";
    for (const auto& mn : t.metric_names) os << ',' << mn;
    os << '\n';
    auto emit = [&](const std::string& label, const json& c) {
      const auto& values = c["values"];
      for (std::size_t i = 0; i < t.num_metrics(); ++i) {
        os << label << ',' << t.metric_names[i];
        for (std::size_t j = 0; j < t.num_metrics(); ++j)
          os << ',' << (values[i][j].is_null() ? std::string() : detail::csv_num(values[i][j].get<double>()));
        os << '\n';
      }
    };
    for (const auto& label : t.system_labels) emit(label, correlations[label][name]);
    if (!averaged.is_null()) emit("fisher_z_average", averaged[name]);
    write_text_file(out_dir / ("correlations_" + name + ".csv"), os.str());
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// hypotheses
// ---------------------------------------------------------------------------

inline HypothesisReport cmd_hypotheses(const std::vector<SystemRun>& runs, const HypothesisSpec& spec,
                                       const InferenceConfig& cfg, const fs::path& out_dir, const json& meta,
                                       std::ostream& log) {
  std::vector<std::string> have;
  for (const auto& r : runs) have.push_back(r.system_label);
  for (const auto& label : spec.labels())
    if (std::find(have.begin(), have.end(), label) == have.end()) throw Error(ErrorCode::MissingSystem, label);
  if (runs.size() < 2) throw Error(ErrorCode::InsufficientSamples, "hypothesis tests need >= 2 systems");
  HypothesisReport report = run_hypotheses(align_systems(runs), spec, cfg);
  for (const auto& [k, v] : meta.items()) report.meta[k] = v;
  write_text_file(out_dir / "hypotheses.json", to_json(report).dump(2) + "\n");
  log << hypothesis_summary(report);
  return report;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline std::string fmt_fixed(double v, int decimals) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// Four decimals, or "<0.0001" below that.
inline std::string fmt_p(double p) {
  if (std::isnan(p)) return "n/a";
  if (p < 0.0001) return "<0.0001";
  return fmt_fixed(p, 4);
}

struct ReportFiles {
  std::string markdown;
  std::string histogram_csv;
  std::string boxplot_csv;
  std::string asl_csv;
};

inline ReportFiles render_report(const json& stats_bundle, const std::optional<HypothesisReport>& hyp) {
  ReportFiles out;
  std::ostringstream md;
  const json& meta = stats_bundle.at("meta");
  const auto systems = meta.at("systems").get<std::vector<std::string>>();
  const auto metrics = meta.at("metrics").get<std::vector<std::string>>();
  const json& sys = stats_bundle.at("systems");

  md << "# CCRS evaluation report\n\n";
  md << "Seed: " << meta.value("seed", json(0)).dump() << "  \nConfig hash: " << meta.value("config_hash", std::string("-"))
     << "  \nQueries: " << meta.value("num_queries", 0) << "\n\n";

  md << "## Mean scores (%)\n\n| System |";
  for (const auto& m : metrics) md << ' ' << m << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < metrics.size(); ++i) md << "---:|";
  md << '\n';
  for (const auto& s : systems) {
    md << "| " << s << " |";
    for (const auto& m : metrics) md << ' ' << fmt_fixed(sys[s][m]["mean"].get<double>(), 2) << " |";
    md << '\n';
  }

  md << "\n## Tie probability\n\n| System |";
  for (const auto& m : metrics) md << ' ' << m << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < metrics.size(); ++i) md << "---:|";
  md << '\n';
  for (const auto& s : systems) {
    md << "| " << s << " |";
    for (const auto& m : metrics) md << ' ' << fmt_fixed(sys[s][m]["tie_probability"].get<double>(), 4) << " |";
    md << '\n';
  }

  std::ostringstream hist, box;
  hist << "system,metric,bin_lo,bin_hi,count\n";
  box << "system,metric,min,q1,median,q3,max\n";
  for (const auto& s : systems)
    for (const auto& m : metrics) {
      const json& h = sys[s][m]["histogram"];
      const double lo = h["lo"].get<double>(), width = h["width"].get<double>();
      const auto& counts = h["counts"];
      for (std::size_t b = 0; b < counts.size(); ++b)
        hist << s << ',' << m << ',' << detail::csv_num(lo + width * static_cast<double>(b)) << ','
             << detail::csv_num(lo + width * static_cast<double>(b + 1)) << ',' << counts[b].get<std::size_t>() << '\n';
      const json& f = sys[s][m]["five_number"];
      box << s << ',' << m;
      for (const auto& v : f) box << ',' << detail::csv_num(v.get<double>());
      box << '\n';
    }
  out.histogram_csv = hist.str();
  out.boxplot_csv = box.str();

  std::map<std::string, std::vector<AslPoint>> curves;
  if (!hyp || hyp->empty()) {
    md << "\n_No hypothesis results were supplied; the hypothesis section is omitted._\n";
  } else {
    md << "\n## Hypotheses (Holm-Bonferroni)\n\n| Hypothesis | Raw p | Adjusted p | Conclusion |\n|---|---:|---:|---|\n";
    for (const auto& h : hyp->hypotheses)
      md << "| " << h.name << " | " << fmt_p(h.raw_aggregated_p) << " | " << fmt_p(h.final_adjusted_p) << " | "
         << h.conclusion() << " |\n";

    if (!hyp->discriminative_power.empty()) {
      md << "\n## Discriminative power\n\n| Metric | Significant pairs | DP |\n|---|---:|---:|\n";
      for (const auto& d : hyp->discriminative_power)
        md << "| " << d.metric << " | " << d.significant_pairs << " / " << d.total_pairs << " | " << fmt_fixed(d.dp, 4)
           << " |\n";
    }
    for (const auto& name : hyp->metric_order) {
      const auto it = hyp->metrics.find(name);
      if (it == hyp->metrics.end() || it->second.all_pairs.empty()) continue;
      md << "\n### Pairwise comparisons: " << name << "\n\n| Comparison | Mean diff | p-value |\n|---|---:|---:|\n";
      std::vector<double> ps;
      for (const auto& [key, d] : it->second.all_pairs) {
        std::string label = key;
        if (auto pos = label.find("_vs_"); pos != std::string::npos) label.replace(pos, 4, " vs ");
        md << "| " << label << " | " << fmt_fixed(d.difference * 100.0, 2) << " | " << fmt_p(d.p_value) << " |\n";
        ps.push_back(d.p_value);
      }
      curves[name] = asl_curve(ps);
    }
  }
  out.asl_csv = asl_csv(curves);
  out.markdown = md.str();
  return out;
}

inline ReportFiles cmd_report(const fs::path& stats_path, const std::optional<fs::path>& hyp_path,
                              const fs::path& out_dir) {
  const json bundle = load_json_file(stats_path);
  std::optional<HypothesisReport> hyp;
  if (hyp_path) hyp = hypothesis_report_from_json(load_json_file(*hyp_path));
  ReportFiles files = render_report(bundle, hyp);
  write_text_file(out_dir / "report.md", files.markdown);
  write_text_file(out_dir / "histogram.csv", files.histogram_csv);
  write_text_file(out_dir / "boxplot.csv", files.boxplot_csv);
  write_text_file(out_dir / "asl.csv", files.asl_csv);
  return files;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"CCRS: judge, analyze and compare RAG systems"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config, out_dir;
  bool strict = false;
  app.add_option("--seed", seed, "Seed for every random choice");
  app.add_option("--config", config, "Run manifest (JSON)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--strict", strict, "Treat invalid result items as errors");

  auto* evaluate = app.add_subcommand("evaluate", "Generate and judge responses for every system in the manifest");

  std::vector<std::string> analyze_files;
  auto* analyze = app.add_subcommand("analyze", "Descriptive statistics and correlations");
  analyze->add_option("files", analyze_files, "Result files as LABEL=path (default: manifest systems)");

  std::vector<std::string> hyp_files;
  std::optional<std::size_t> B;
  std::optional<double> alpha;
  std::optional<std::size_t> threads;
  auto* hypotheses = app.add_subcommand("hypotheses", "Randomized Tukey HSD, H1-H3 and Holm-Bonferroni");
  hypotheses->add_option("files", hyp_files, "Result files as LABEL=path (default: manifest systems)");
  hypotheses->add_option("-B,--permutations", B, "Permutation count");
  hypotheses->add_option("--alpha", alpha, "Significance level");
  hypotheses->add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string stats_path;
  std::optional<std::string> hyp_path;
  auto* report = app.add_subcommand("report", "Markdown report and plot CSVs");
  report->add_option("--stats", stats_path, "stats.json from analyze")->required();
  report->add_option("--hypotheses", hyp_path, "hypotheses.json from hypotheses");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    RunManifest m;
    if (config) m = load_manifest(*config);
    apply_overrides(m, seed, out_dir ? std::optional<fs::path>(*out_dir) : std::nullopt, strict);
    if (B) {
      m.inference.B = *B;
      m.canonical["inference"]["B"] = *B;
    }
    if (alpha) {
      m.inference.alpha = *alpha;
      m.canonical["inference"]["alpha"] = *alpha;
    }
    if (threads) m.inference.threads = *threads;
    m.inference.validate();

    if (evaluate->parsed()) {
      if (!config) throw Error(ErrorCode::Config, "evaluate needs --config");
      cmd_evaluate(m, out);
    } else if (analyze->parsed()) {
      std::vector<LabeledPath> files;
      for (const auto& a : analyze_files) files.push_back(parse_labeled_path(a));
      if (files.empty()) files = manifest_result_files(m);
      cmd_analyze(load_runs(files, m.strict, err), m.output_dir, artifact_meta(m, "stats"), out);
      out << "wrote " << (m.output_dir / "stats.json").string() << "\n";
    } else if (hypotheses->parsed()) {
      std::vector<LabeledPath> files;
      for (const auto& a : hyp_files) files.push_back(parse_labeled_path(a));
      if (files.empty()) files = manifest_result_files(m);
      cmd_hypotheses(load_runs(files, m.strict, err), m.hypotheses, m.inference, m.output_dir,
                     artifact_meta(m, "hypotheses"), out);
    } else if (report->parsed()) {
      cmd_report(stats_path, hyp_path ? std::optional<fs::path>(*hyp_path) : std::nullopt, m.output_dir);
      out << "wrote " << (m.output_dir / "report.md").string() << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kComputationError;
  }
  return kOk;
}

}  // namespace ccrs::cli

#pragma once

#include <algorithm>
#include <cmath>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <unicode/unistr.h>

#include "ccrs/error.hpp"
#include "ccrs/judge.hpp"
#include "ccrs/pipeline.hpp"
#include "ccrs/records.hpp"

namespace ccrs {

enum class EmNormalization { Exact, CasefoldTrim };

struct AcConfig {
  /// Weight of the exact-match component.
  double lambda = 0.7;
  EmNormalization normalization = EmNormalization::CasefoldTrim;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::Config, "lambda must be in [0,1]");
  }

  /// 1 - lambda, snapped to 12 decimals so 0.7 gives exactly 0.3 rather
  /// than 0.30000000000000004.
  double llm_weight() const { return std::round((1.0 - lambda) * 1e12) / 1e12; }
};

/// Unicode full case folding plus trimming of leading/trailing white space.
inline std::string casefold_trim(std::string_view s) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  u.trim();
  u.foldCase();
  std::string out;
  u.toUTF8String(out);
  return out;
}

inline int exact_match(std::string_view response, std::string_view gt, const AcConfig& cfg = {}) {
  if (cfg.normalization == EmNormalization::Exact) return response == gt ? 1 : 0;
  return casefold_trim(response) == casefold_trim(gt) ? 1 : 0;
}

/// lambda * em + (1 - lambda) * llm_norm.
inline double answer_correctness(int em, double llm_norm, const AcConfig& cfg = {}) {
  cfg.validate();
  if (!(llm_norm >= 0.0 && llm_norm <= 1.0)) throw Error(ErrorCode::ValueOutOfRange, "llm_norm " + std::to_string(llm_norm));
  return std::min(1.0, cfg.lambda * (em ? 1.0 : 0.0) + cfg.llm_weight() * llm_norm);
}

/// Builds the five judge requests for one response.
inline std::array<JudgeRequest, 5> judge_requests(const QueryRecord& query, std::string_view context,
                                                  std::string_view response) {
  const std::string ctx(context), resp(response);
  return {JudgeRequest{JudgePromptKind::CC, std::nullopt, ctx, resp, std::nullopt},
          JudgeRequest{JudgePromptKind::QR, query.text, std::nullopt, resp, std::nullopt},
          JudgeRequest{JudgePromptKind::ID, query.text, ctx, resp, std::nullopt},
          JudgeRequest{JudgePromptKind::AC_LLM, std::nullopt, ctx, resp, query.gt_answer},
          JudgeRequest{JudgePromptKind::IR, std::nullopt, ctx, resp, query.gt_answer}};
}

/// Five judge calls (none for an empty response) and one exact-match check.
/// Judge errors are rethrown with the failing prompt kind prepended.
inline MetricVector evaluate_response(const QueryRecord& query, std::string_view context, std::string_view response,
                                      const JudgeBackend& judge, const AcConfig& cfg = {},
                                      const JudgeSettings& settings = {}) {
  std::array<double, 5> norm{};
  const auto requests = judge_requests(query, context, response);
  for (std::size_t i = 0; i < requests.size(); ++i) {
    try {
      norm[i] = judge_score(requests[i], judge, settings).normalized;
    } catch (const Error& e) {
      throw Error(e.code(), "[" + std::string(to_string(requests[i].kind)) + "] " + e.what());
    }
  }
  MetricVector v;
  v.cc = norm[0];
  v.qr = norm[1];
  v.id = norm[2];
  v.ac = answer_correctness(exact_match(response, query.gt_answer, cfg), norm[3], cfg);
  v.ir = norm[4];
  return v;
}

enum class FailurePolicy {
  /// Record the query as missing; it becomes NaN downstream.
  Missing,
  /// Score the response 0 on all metrics.
  Zero,
  /// Abort the whole evaluation.
  Propagate,
};

struct EvaluationConfig {
  AcConfig ac;
  JudgeSettings judge;
  FailurePolicy on_failure = FailurePolicy::Missing;
  /// Responses evaluated concurrently; 0 picks the hardware concurrency.
  std::size_t concurrency = 1;
};

struct EvaluationFailure {
  std::int64_t query_id;
  std::string message;
};

struct SystemEvaluation {
  SystemRun run;
  std::vector<EvaluationFailure> failures;
};

/// Scores every dataset query from its matching RAG output. Results are
/// stored by dataset position, so worker scheduling never affects output.
inline SystemEvaluation evaluate_system_detailed(const std::vector<QueryRecord>& dataset,
                                                 const std::vector<RagOutput>& outputs, const JudgeBackend& judge,
                                                 const EvaluationConfig& cfg = {}, std::string label = "system") {
  cfg.ac.validate();
  std::map<std::int64_t, const RagOutput*> by_id;
  for (const auto& o : outputs) by_id[o.query_id] = &o;
  std::vector<const RagOutput*> matched;
  matched.reserve(dataset.size());
  for (const auto& q : dataset) {
    auto it = by_id.find(q.query_id);
    if (it == by_id.end()) throw Error(ErrorCode::MissingOutput, std::to_string(q.query_id));
    matched.push_back(it->second);
  }

  std::vector<std::optional<MetricVector>> results(dataset.size());
  std::vector<std::string> errors(dataset.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;

  auto worker = [&] {
    while (!abort) {
      const std::size_t i = next++;
      if (i >= dataset.size()) return;
      try {
        results[i] = evaluate_response(dataset[i], matched[i]->context_text, matched[i]->response, judge, cfg.ac, cfg.judge);
      } catch (const Error& e) {
        if (cfg.on_failure == FailurePolicy::Propagate) {
          std::lock_guard lock(fatal_mutex);
          if (!fatal)
            fatal = std::make_exception_ptr(Error(e.code(), "query " + std::to_string(dataset[i].query_id) + ": " + e.what()));
          abort = true;
          return;
        }
        errors[i] = e.what();
      }
    }
  };
  std::size_t threads = cfg.concurrency ? cfg.concurrency : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(dataset.size(), 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  SystemEvaluation out;
  out.run.system_label = std::move(label);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto id = dataset[i].query_id;
    if (results[i]) {
      out.run.records.push_back({id, *results[i]});
      continue;
    }
    out.failures.push_back({id, errors[i]});
    if (cfg.on_failure == FailurePolicy::Zero)
      out.run.records.push_back({id, MetricVector{}});
    else
      out.run.missing_query_ids.push_back(id);
  }
  return out;
}

inline SystemRun evaluate_system(const std::vector<QueryRecord>& dataset, const std::vector<RagOutput>& outputs,
                                 const JudgeBackend& judge, const EvaluationConfig& cfg = {},
                                 std::string label = "system") {
  return evaluate_system_detailed(dataset, outputs, judge, cfg, std::move(label)).run;
}

}  // namespace ccrs

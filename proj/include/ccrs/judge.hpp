#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ccrs/error.hpp"
#include "ccrs/http.hpp"
#include "ccrs/random.hpp"
#include "ccrs/util.hpp"

namespace ccrs {

enum class JudgePromptKind { CC, QR, ID, AC_LLM, IR };

inline constexpr std::array<JudgePromptKind, 5> kAllPromptKinds = {
    JudgePromptKind::CC, JudgePromptKind::QR, JudgePromptKind::ID, JudgePromptKind::AC_LLM, JudgePromptKind::IR};

inline constexpr std::string_view to_string(JudgePromptKind kind) {
  switch (kind) {
    case JudgePromptKind::CC: return "CC";
    case JudgePromptKind::QR: return "QR";
    case JudgePromptKind::ID: return "ID";
    case JudgePromptKind::AC_LLM: return "AC_LLM";
    case JudgePromptKind::IR: return "IR";
  }
  return "?";
}

namespace prompts {

// Judge instructions. Placeholders are {question}, {context}, {response} and
// {ground_truth}; everything else is sent verbatim. Changing a single byte
// here changes the scores, which is why the checksums are pinned in tests.

inline constexpr std::string_view kContextualCoherence =
    "Evaluate the Contextual Coherence between the generated response and the retrieved context.\n"
    "\n"
    "Retrieved Context (C): {context}\n"
    "\n"
    "Generated Response (r): {response}\n"
    "\n"
    "Task: Assess the logical consistency and coherence of the response with respect to the provided "
    "context. Ensure the response logically follows from and does not contradict the context.\n"
    "\n"
    "Scoring: Score from 0 to 100, where 0 is completely incoherent or contradictory, and 100 is "
    "perfectly coherent and consistent. If no response is generated, the score is 0.\n"
    "\n"
    "Output: Only print the score and nothing else.";

inline constexpr std::string_view kQuestionRelevance =
    "Evaluate the Question Relevance of the generated response to the user query.\n"
    "\n"
    "User Query (q): {question}\n"
    "\n"
    "Generated Response (r): {response}\n"
    "\n"
    "Task: Assess how well the response directly addresses the user's query. Consider if the response "
    "answers the question asked.\n"
    "\n"
    "Scoring: Score from 0 to 100, where 0 is completely irrelevant and 100 is perfectly relevant and "
    "directly answers the query. If no response is generated, the score is 0.\n"
    "\n"
    "Output: Only print the score and nothing else.";

inline constexpr std::string_view kInformationDensity =
    "Evaluate the Information Density of the generated response.\n"
    "\n"
    "User Query (q): {question}\n"
    "\n"
    "Retrieved Context (C): {context}\n"
    "\n"
    "Generated Response (r): {response}\n"
    "\n"
    "Task: Assess the balance of conciseness and informativeness in the response, considering both the "
    "context and the query. The response should provide necessary information without being overly "
    "verbose or unnecessarily brief.\n"
    "\n"
    "Scoring: Score from 0 to 100, where 0 is either too verbose (contains excessive irrelevant detail) "
    "or uninformative (lacks necessary information), and 100 is optimally concise and informative for "
    "the query. If no response is generated, the score is 0.\n"
    "\n"
    "Output: Only print the score and nothing else.";

inline constexpr std::string_view kAnswerCorrectness =
    "Evaluate the Answer Correctness of the generated response.\n"
    "\n"
    "Retrieved Context (C): {context}\n"
    "\n"
    "Generated Response (r): {response}\n"
    "\n"
    "Ground Truth Answer (g): {ground_truth}\n"
    "\n"
    "Task: Assess the factual accuracy of the information presented in the response compared to the "
    "ground truth answer, considering the provided context. Do not penalize differences in phrasing if "
    "the core factual meaning is preserved and accurate according to the ground truth.\n"
    "\n"
    "Scoring: Score from 0 to 100, where 0 is completely incorrect or contains significant factual "
    "errors, and 100 represents perfect factual accuracy (semantically equivalent to the ground truth). "
    "If no response is generated, the score is 0.\n"
    "\n"
    "Output: Only print the score and nothing else.";

inline constexpr std::string_view kInformationRecall =
    "Evaluate the Information Recall of the generated response.\n"
    "\n"
    "Retrieved Context (C): {context}\n"
    "\n"
    "Generated Response (r): {response}\n"
    "\n"
    "Ground Truth Answer (g): {ground_truth}\n"
    "\n"
    "Task: Assess how much of the essential information present in the ground truth answer is captured "
    "in the generated response, considering the provided context. Focus on whether key facts or points "
    "from the ground truth are included.\n"
    "\n"
    "Scoring: Score from 0 to 100, where 0 means no essential information from the ground truth is "
    "recalled, and 100 means all essential information is fully captured. If no response is generated, "
    "the score is 0.\n"
    "\n"
    "Output: Only print the score and nothing else.";

}  // namespace prompts

inline constexpr std::string_view prompt_template(JudgePromptKind kind) {
  switch (kind) {
    case JudgePromptKind::CC: return prompts::kContextualCoherence;
    case JudgePromptKind::QR: return prompts::kQuestionRelevance;
    case JudgePromptKind::ID: return prompts::kInformationDensity;
    case JudgePromptKind::AC_LLM: return prompts::kAnswerCorrectness;
    case JudgePromptKind::IR: return prompts::kInformationRecall;
  }
  return {};
}

inline constexpr std::uint64_t template_checksum(JudgePromptKind kind) { return fnv1a64(prompt_template(kind)); }

struct JudgeRequest {
  JudgePromptKind kind = JudgePromptKind::CC;
  std::optional<std::string> question;
  std::optional<std::string> context;
  std::string response;
  std::optional<std::string> ground_truth;
};

struct JudgeScore {
  int raw = 0;
  double normalized = 0.0;
  std::string raw_reply;
  int retries_used = 0;
};

/// Substitutes each placeholder in one left-to-right pass; substituted text
/// is never rescanned, so field values containing "{context}" etc. are safe.
inline std::string render_prompt(const JudgeRequest& req) {
  const std::string_view tmpl = prompt_template(req.kind);
  std::string out;
  out.reserve(tmpl.size() + req.response.size() + 256);
  auto field = [&](std::string_view name) -> const std::string& {
    const std::optional<std::string>* slot = nullptr;
    if (name == "response") return req.response;
    if (name == "question") slot = &req.question;
    else if (name == "context") slot = &req.context;
    else if (name == "ground_truth") slot = &req.ground_truth;
    if (!slot || !slot->has_value())
      throw Error(ErrorCode::MissingField, std::string(to_string(req.kind)) + ": " + std::string(name));
    return **slot;
  };
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find('}', open);
    out.append(tmpl.substr(pos, open - pos));
    out.append(field(tmpl.substr(open + 1, close - open - 1)));
    pos = close + 1;
  }
  return out;
}

enum class ParseMode { Strict, Lenient };

namespace detail {

inline std::string_view trim_ascii(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline int checked_score(std::string_view digits) {
  while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
  if (digits.size() > 3) throw Error(ErrorCode::ScoreOutOfRange, std::string(digits));
  int value = 0;
  std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (value > 100) throw Error(ErrorCode::ScoreOutOfRange, std::to_string(value));
  return value;
}

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace detail

/// A trimmed bare integer is taken as is; in lenient mode the first run of
/// digits anywhere in the reply is used instead.
inline int parse_score(std::string_view reply, ParseMode mode = ParseMode::Lenient) {
  const std::string_view trimmed = detail::trim_ascii(reply);
  if (detail::all_digits(trimmed)) return detail::checked_score(trimmed);
  if (!trimmed.empty() && trimmed.front() == '-' && detail::all_digits(trimmed.substr(1)))
    throw Error(ErrorCode::ScoreOutOfRange, std::string(trimmed));
  if (mode == ParseMode::Strict) throw Error(ErrorCode::NoScoreFound, std::string(reply));
  std::size_t i = 0;
  while (i < trimmed.size() && !std::isdigit(static_cast<unsigned char>(trimmed[i]))) ++i;
  if (i == trimmed.size()) throw Error(ErrorCode::NoScoreFound, std::string(reply));
  std::size_t j = i;
  while (j < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[j]))) ++j;
  return detail::checked_score(trimmed.substr(i, j - i));
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

struct JudgeCall {
  JudgePromptKind kind;
  std::string_view prompt;
  int attempt = 0;
};

/// Anything that turns a rendered judge prompt into a text reply.
/// Implementations must be safe to call concurrently.
class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::string reply(const JudgeCall& call) const = 0;
};

/// Sends prompts to an OpenAI-compatible chat endpoint.
class HttpJudge final : public JudgeBackend {
 public:
  explicit HttpJudge(EndpointConfig cfg) : client_(std::move(cfg)) {}
  std::string reply(const JudgeCall& call) const override { return client_.complete(call.prompt); }

 private:
  ChatClient client_;
};

/// Deterministic offline judge: the score is a pure function of the prompt
/// kind, a hash of the rendered prompt (which embeds every input) and the seed.
class MockJudge final : public JudgeBackend {
 public:
  explicit MockJudge(std::uint64_t seed) : seed_(seed) {}

  int score_for(JudgePromptKind kind, std::string_view prompt) const {
    std::uint64_t h = fnv1a64(prompt);
    h = splitmix64(h ^ splitmix64(seed_) ^ (static_cast<std::uint64_t>(kind) + 1) * 0x9e3779b97f4a7c15ULL);
    return static_cast<int>(h % 101);
  }

  std::string reply(const JudgeCall& call) const override { return std::to_string(score_for(call.kind, call.prompt)); }

 private:
  std::uint64_t seed_;
};

inline MockJudge mock_judge(std::uint64_t seed) { return MockJudge(seed); }

struct JudgeSettings {
  int max_retries = 2;
  ParseMode parse_mode = ParseMode::Lenient;

  static JudgeSettings from(const EndpointConfig& cfg) { return {cfg.max_retries, ParseMode::Lenient}; }
};

inline bool is_blank(std::string_view s) { return detail::trim_ascii(s).empty(); }

/// Scores one request. Empty responses score 0 without contacting the
/// backend. Unparseable replies are re-asked up to `max_retries` times;
/// transport errors propagate immediately.
inline JudgeScore judge_score(const JudgeRequest& req, const JudgeBackend& backend, const JudgeSettings& settings = {}) {
  if (is_blank(req.response)) return JudgeScore{0, 0.0, "", 0};
  const std::string prompt = render_prompt(req);
  std::string last;
  for (int attempt = 0; attempt <= settings.max_retries; ++attempt) {
    last = backend.reply(JudgeCall{req.kind, prompt, attempt});
    try {
      const int raw = parse_score(last, settings.parse_mode);
      return JudgeScore{raw, raw / 100.0, last, attempt};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoScoreFound && e.code() != ErrorCode::ScoreOutOfRange) throw;
    }
  }
  throw Error(ErrorCode::ParseExhausted, std::string(to_string(req.kind)) + ": last reply '" + last + "'");
}

inline JudgeScore judge_score(const JudgeRequest& req, const JudgeBackend& backend, const EndpointConfig& cfg) {
  return judge_score(req, backend, JudgeSettings::from(cfg));
}

}  // namespace ccrs

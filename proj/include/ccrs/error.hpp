#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ccrs {

enum class ErrorCode {
  // ingestion
  MissingFile,
  MalformedJson,
  DuplicateId,
  MissingKey,
  NotAList,
  AllItemsInvalid,
  InvalidItem,
  SampleCountMismatch,
  EmptyRun,
  // judge / endpoints
  MissingField,
  NoScoreFound,
  ScoreOutOfRange,
  EndpointUnreachable,
  EmbeddingEndpointUnreachable,
  HttpStatus,
  MalformedReply,
  ParseExhausted,
  // metrics / pipeline
  MissingOutput,
  EmptyIndex,
  DimensionMismatch,
  // statistics
  EmptyInput,
  InsufficientSamples,
  DegenerateColumn,
  PerfectCorrelation,
  ValueOutOfRange,
  InvalidPair,
  AllMissingColumn,
  LengthMismatch,
  MissingPValue,
  // cli
  MissingSystem,
  Config,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::NotAList: return "NotAList";
    case ErrorCode::AllItemsInvalid: return "AllItemsInvalid";
    case ErrorCode::InvalidItem: return "InvalidItem";
    case ErrorCode::SampleCountMismatch: return "SampleCountMismatch";
    case ErrorCode::EmptyRun: return "EmptyRun";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::NoScoreFound: return "NoScoreFound";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::EmbeddingEndpointUnreachable: return "EmbeddingEndpointUnreachable";
    case ErrorCode::HttpStatus: return "HttpStatus";
    case ErrorCode::MalformedReply: return "MalformedReply";
    case ErrorCode::ParseExhausted: return "ParseExhausted";
    case ErrorCode::MissingOutput: return "MissingOutput";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::DegenerateColumn: return "DegenerateColumn";
    case ErrorCode::PerfectCorrelation: return "PerfectCorrelation";
    case ErrorCode::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::InvalidPair: return "InvalidPair";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingPValue: return "MissingPValue";
    case ErrorCode::MissingSystem: return "MissingSystem";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorCategory { Configuration, Ingestion, Endpoint, Computation };

inline constexpr ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile:
    case ErrorCode::MalformedJson:
    case ErrorCode::DuplicateId:
    case ErrorCode::MissingKey:
    case ErrorCode::NotAList:
    case ErrorCode::AllItemsInvalid:
    case ErrorCode::InvalidItem:
    case ErrorCode::SampleCountMismatch:
    case ErrorCode::EmptyRun:
    case ErrorCode::MissingOutput:
      return ErrorCategory::Ingestion;
    case ErrorCode::EndpointUnreachable:
    case ErrorCode::EmbeddingEndpointUnreachable:
    case ErrorCode::HttpStatus:
    case ErrorCode::MalformedReply:
    case ErrorCode::ParseExhausted:
    case ErrorCode::NoScoreFound:
    case ErrorCode::ScoreOutOfRange:
      return ErrorCategory::Endpoint;
    case ErrorCode::MissingSystem:
    case ErrorCode::Config:
    case ErrorCode::MissingField:
      return ErrorCategory::Configuration;
    default:
      return ErrorCategory::Computation;
  }
}

/// The single exception type thrown by the library. `code()` identifies the
/// failure; `what()` carries the human-readable detail (ids, labels, values).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace ccrs

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ccrs/error.hpp"

namespace ccrs {

using json = nlohmann::json;

/// 64-bit FNV-1a. Used for template checksums and config hashes, never for
/// anything security related.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Config, "cannot write " + path.string());
  out << text;
}

/// Parses JSON text, reporting the 1-based line of a syntax error.
/// MalformedJson carrying the line number of a parser failure.
inline Error malformed_json(std::string_view text, const std::string& origin, const json::parse_error& e) {
  std::size_t line = 1;
  const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
  for (std::size_t i = 0; i < upto; ++i)
    if (text[i] == '\n') ++line;
  return Error(ErrorCode::MalformedJson, origin + ": line " + std::to_string(line) + ": " + e.what());
}

inline json parse_json_text(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw malformed_json(text, origin, e);
  }
}

inline json load_json_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  return parse_json_text(read_text_file(path), path.string());
}

inline bool is_missing(double v) { return std::isnan(v); }

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

}  // namespace ccrs

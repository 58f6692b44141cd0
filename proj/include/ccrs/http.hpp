#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>

#include "ccrs/error.hpp"
#include "ccrs/util.hpp"

namespace ccrs {

/// Connection settings for an OpenAI-compatible endpoint. The API key is
/// read from the named environment variable at call time and never stored.
struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  double temperature = 0.0;
  std::string api_key_env = "CCRS_API_KEY";
  std::optional<int> max_tokens;

  void validate() const {
    if (timeout.count() <= 0) throw Error(ErrorCode::Config, "endpoint timeout must be > 0");
    if (max_retries < 0) throw Error(ErrorCode::Config, "max_retries must be >= 0");
    if (base_url.empty()) throw Error(ErrorCode::Config, "endpoint base_url is empty");
  }
};

using JudgeEndpointConfig = EndpointConfig;

struct BaseUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

/// Splits "http://host:port/v1" into the client origin and path prefix.
inline BaseUrl split_base_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw Error(ErrorCode::Config, "base_url lacks a scheme: " + std::string(url));
  const std::string_view scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error(ErrorCode::Config, "unsupported scheme: " + std::string(scheme));
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw Error(ErrorCode::Config, "https endpoints need a TLS-enabled build (CCRS_ENABLE_TLS)");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  BaseUrl out;
  if (path_start == std::string_view::npos) {
    out.scheme_host_port = std::string(url);
  } else {
    out.scheme_host_port = std::string(url.substr(0, path_start));
    out.path_prefix = std::string(url.substr(path_start));
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  return out;
}

namespace detail {

inline httplib::Headers auth_headers(const EndpointConfig& cfg) {
  httplib::Headers headers;
  if (!cfg.api_key_env.empty())
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  return headers;
}

inline json post_json(const EndpointConfig& cfg, std::string_view route, const json& body,
                      ErrorCode unreachable_code) {
  const BaseUrl base = split_base_url(cfg.base_url);
  httplib::Client client(base.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  auto res = client.Post(base.path_prefix + std::string(route), auth_headers(cfg), body.dump(), "application/json");
  if (!res) throw Error(unreachable_code, cfg.base_url + ": " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error(ErrorCode::HttpStatus, std::to_string(res->status) + " from " + cfg.base_url);
  try {
    return json::parse(res->body);
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::MalformedReply, "non-JSON body from " + cfg.base_url);
  }
}

}  // namespace detail

/// Single-message chat completion. Thread-safe: each call opens its own
/// connection.
class ChatClient {
 public:
  explicit ChatClient(EndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  static json request_body(const EndpointConfig& cfg, std::string_view prompt) {
    json body = {{"model", cfg.model_name},
                 {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
                 {"temperature", cfg.temperature}};
    if (cfg.max_tokens) body["max_tokens"] = *cfg.max_tokens;
    return body;
  }

  /// Text of the first choice.
  static std::string reply_text(const json& reply) {
    const auto choices = reply.find("choices");
    if (choices == reply.end() || !choices->is_array() || choices->empty())
      throw Error(ErrorCode::MalformedReply, "reply has no choices");
    const json& first = choices->front();
    if (auto msg = first.find("message"); msg != first.end() && msg->is_object()) {
      if (auto content = msg->find("content"); content != msg->end() && content->is_string())
        return content->get<std::string>();
    }
    if (auto text = first.find("text"); text != first.end() && text->is_string()) return text->get<std::string>();
    throw Error(ErrorCode::MalformedReply, "first choice has no text content");
  }

  std::string complete(std::string_view prompt) const {
    return reply_text(detail::post_json(cfg_, "/chat/completions", request_body(cfg_, prompt),
                                        ErrorCode::EndpointUnreachable));
  }

  const EndpointConfig& config() const { return cfg_; }

 private:
  EndpointConfig cfg_;
};

/// OpenAI-compatible embeddings: POST {model, input: [texts]} and read
/// data[i].embedding.
class EmbeddingClient {
 public:
  explicit EmbeddingClient(EndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) const {
    const json body = {{"model", cfg_.model_name}, {"input", texts}};
    const json reply = detail::post_json(cfg_, "/embeddings", body, ErrorCode::EmbeddingEndpointUnreachable);
    const auto data = reply.find("data");
    if (data == reply.end() || !data->is_array() || data->size() != texts.size())
      throw Error(ErrorCode::MalformedReply, "embedding reply does not match input count");
    std::vector<std::vector<float>> out(texts.size());
    for (std::size_t i = 0; i < data->size(); ++i) {
      const json& item = (*data)[i];
      std::size_t slot = i;
      if (auto idx = item.find("index"); idx != item.end() && idx->is_number_unsigned()) slot = idx->get<std::size_t>();
      if (slot >= out.size() || !item.contains("embedding")) throw Error(ErrorCode::MalformedReply, "bad embedding item");
      out[slot] = item["embedding"].get<std::vector<float>>();
    }
    return out;
  }

 private:
  EndpointConfig cfg_;
};

}  // namespace ccrs

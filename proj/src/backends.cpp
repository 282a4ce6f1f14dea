#include "safegate/backends.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <thread>

#include "safegate/textutil.hpp"

namespace safegate {

using nlohmann::json;

std::string to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::Transport: return "backend_transport";
    case BackendErrorKind::Timeout: return "backend_timeout";
    case BackendErrorKind::HttpStatus: return "backend_http_status";
    case BackendErrorKind::MalformedPayload: return "backend_malformed_payload";
    case BackendErrorKind::DimensionMismatch: return "dimension_mismatch";
  }
  return "backend_unknown";
}

BackendException::BackendException(BackendError error)
    : Error(to_string(error.kind), error.detail), error_(std::move(error)) {}

namespace {

[[noreturn]] void raise(BackendErrorKind kind, std::string detail,
                        bool retryable, int status = 0) {
  throw BackendException(BackendError{kind, status, std::move(detail), retryable});
}

// Error details deliberately avoid request/response bodies and headers so
// credentials can never leak through logs.
[[noreturn]] void raise_transport(const std::string& name, httplib::Error err) {
  const bool timeout = err == httplib::Error::ConnectionTimeout ||
                       err == httplib::Error::Read ||
                       err == httplib::Error::Write;
  raise(timeout ? BackendErrorKind::Timeout : BackendErrorKind::Transport,
        name + ": " + httplib::to_string(err), /*retryable=*/true);
}

template <typename T>
T field(const json& j, const char* key, const std::string& name) {
  if (!j.contains(key)) {
    raise(BackendErrorKind::MalformedPayload,
          name + ": response missing field '" + std::string(key) + "'",
          /*retryable=*/false);
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    raise(BackendErrorKind::MalformedPayload,
          name + ": response field '" + std::string(key) + "' has wrong type",
          /*retryable=*/false);
  }
}

}  // namespace

HttpBackend::HttpBackend(BackendConfig config, std::string name)
    : config_(std::move(config)),
      name_(std::move(name)),
      slots_(std::max(1, config_.max_in_flight)) {
  if (config_.base_url.empty()) {
    throw Error(errc::config_error, name_ + ": base_url is empty");
  }
  if (!config_.api_key_env.empty()) {
    const char* value = std::getenv(config_.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
      throw Error(errc::config_error,
                  name_ + ": environment variable '" + config_.api_key_env +
                      "' is not set");
    }
    api_key_ = value;
  }
}

json HttpBackend::post_json(const std::string& path, const json& body) {
  const std::string payload = body.dump();
  const int attempts = 1 + std::max(0, config_.max_retries);
  auto backoff = config_.retry_backoff;
  BackendError last;
  for (int i = 0; i < attempts; ++i) {
    if (i > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    try {
      return attempt(path, payload);
    } catch (const BackendException& e) {
      if (!e.error().retryable) throw;
      last = e.error();
    }
  }
  throw BackendException(last);
}

json HttpBackend::attempt(const std::string& path, const std::string& payload) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<4096>& s;
    ~Release() { s.release(); }
  } release{slots_};

  // One client per request: no shared socket state, safe under concurrency.
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);

  httplib::Headers headers;
  if (!api_key_.empty()) {
    headers.emplace("Authorization", "Bearer " + api_key_);
  }
  auto result = client.Post(path, headers, payload, "application/json");
  if (!result) raise_transport(name_, result.error());
  if (result->status < 200 || result->status >= 300) {
    raise(BackendErrorKind::HttpStatus,
          name_ + ": HTTP " + std::to_string(result->status),
          /*retryable=*/result->status >= 500, result->status);
  }
  try {
    return json::parse(result->body);
  } catch (const json::exception&) {
    raise(BackendErrorKind::MalformedPayload, name_ + ": response is not JSON",
          /*retryable=*/false);
  }
}

std::string HttpGenerator::generate(const std::string& prompt) {
  if (trimmed(prompt).empty()) {
    throw Error(errc::empty_text, "generate: empty prompt");
  }
  const json response = post_json("/generate", {{"prompt", prompt}});
  return field<std::string>(response, "text", "generator");
}

Embedding HttpEmbedder::embed(const std::string& text) {
  if (trimmed(text).empty()) {
    throw Error(errc::empty_text, "embed: empty text");
  }
  const json response = post_json("/embed", {{"input", text}});
  const auto values = field<std::vector<double>>(response, "embedding", "embedder");
  if (static_cast<Eigen::Index>(values.size()) != expected_dim_) {
    raise(BackendErrorKind::DimensionMismatch,
          "embedder: got " + std::to_string(values.size()) +
              " components, expected " + std::to_string(expected_dim_),
          /*retryable=*/false);
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      raise(BackendErrorKind::MalformedPayload,
            "embedder: non-finite embedding component", /*retryable=*/false);
    }
  }
  return Eigen::Map<const Embedding>(values.data(),
                                     static_cast<Eigen::Index>(values.size()));
}

std::string HttpEmbedder::identity() const {
  return "embed@" + config().base_url;
}

std::string HttpRewriter::rewrite(const std::string& text) {
  if (trimmed(text).empty()) {
    throw Error(errc::empty_text, "rewrite: empty text");
  }
  const json response = post_json("/rewrite", {{"text", text}});
  auto corrected = field<std::string>(response, "corrected_text", "rewriter");
  if (corrected.empty()) {
    raise(BackendErrorKind::MalformedPayload, "rewriter: empty corrected_text",
          /*retryable=*/false);
  }
  return corrected;
}

bool HttpParaphraseJudge::equivalent(const std::string& s1,
                                     const std::string& s2) {
  if (s1.empty() || s2.empty()) {
    throw Error(errc::empty_text, "paraphrase: empty sentence");
  }
  const json response =
      post_json("/paraphrase", {{"sentence1", s1}, {"sentence2", s2}});
  return field<bool>(response, "equivalent", "paraphrase");
}

}  // namespace safegate

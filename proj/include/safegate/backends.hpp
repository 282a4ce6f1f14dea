#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include <json.hpp>

#include "safegate/error.hpp"
#include "safegate/handles.hpp"

namespace safegate {

struct BackendConfig {
  std::string base_url;
  /// Name of the environment variable holding the credential. Empty for
  /// unauthenticated endpoints; the config file never carries the secret
  /// itself.
  std::string api_key_env;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{500};  // doubles per attempt
  int max_in_flight = 8;
};

enum class BackendErrorKind {
  Transport,
  Timeout,
  HttpStatus,
  MalformedPayload,
  DimensionMismatch,
};

struct BackendError {
  BackendErrorKind kind = BackendErrorKind::Transport;
  int http_status = 0;  // set for HttpStatus
  std::string detail;
  bool retryable = false;
};

std::string to_string(BackendErrorKind kind);

class BackendException : public Error {
public:
  explicit BackendException(BackendError error);
  const BackendError& error() const noexcept { return error_; }

private:
  BackendError error_;
};

/// Shared POST-JSON plumbing: bearer auth from the named environment
/// variable, bounded in-flight requests, and retry with doubling backoff on
/// retryable failures (transport, timeout, 5xx).
class HttpBackend {
public:
  HttpBackend(BackendConfig config, std::string name);
  virtual ~HttpBackend() = default;

  const BackendConfig& config() const noexcept { return config_; }

protected:
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body);

private:
  nlohmann::json attempt(const std::string& path, const std::string& payload);

  BackendConfig config_;
  std::string name_;
  std::string api_key_;
  std::counting_semaphore<4096> slots_;
};

class HttpGenerator final : public TextGenerator, private HttpBackend {
public:
  explicit HttpGenerator(BackendConfig config)
      : HttpBackend(std::move(config), "generator") {}
  std::string generate(const std::string& prompt) override;
};

class HttpEmbedder final : public Embedder, private HttpBackend {
public:
  HttpEmbedder(BackendConfig config, Eigen::Index expected_dim)
      : HttpBackend(std::move(config), "embedder"), expected_dim_(expected_dim) {}
  Embedding embed(const std::string& text) override;
  std::string identity() const override;

private:
  Eigen::Index expected_dim_;
};

class HttpRewriter final : public Rewriter, private HttpBackend {
public:
  explicit HttpRewriter(BackendConfig config)
      : HttpBackend(std::move(config), "rewriter") {}
  std::string rewrite(const std::string& text) override;
};

class HttpParaphraseJudge final : public ParaphraseJudge, private HttpBackend {
public:
  explicit HttpParaphraseJudge(BackendConfig config)
      : HttpBackend(std::move(config), "paraphrase") {}
  bool equivalent(const std::string& s1, const std::string& s2) override;
};

}  // namespace safegate

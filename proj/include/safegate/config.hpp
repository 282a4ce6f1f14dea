#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "safegate/backends.hpp"
#include "safegate/gateway.hpp"

namespace safegate {

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;
};

/// Declarative configuration for the CLI. Sections are optional; each command
/// validates the pieces it needs and fails fast naming the missing key.
/// Relative paths resolve against the config file's directory. Credentials
/// enter only through the environment variables named by api_key_env.
struct AppConfig {
  std::optional<BackendConfig> generator;
  std::optional<BackendConfig> embedder;
  std::optional<BackendConfig> rewriter;
  std::optional<BackendConfig> paraphrase;
  Eigen::Index embedder_dim = 0;
  std::optional<std::filesystem::path> toxicity_library;
  std::optional<std::filesystem::path> jailbreak_library;
  std::optional<std::filesystem::path> subspace;
  std::optional<std::filesystem::path> safe_pool;
  std::optional<std::filesystem::path> report_sink;
  ModerationPolicy policy;
  GatewayOptions gateway_options;
  ServerConfig server;
  std::string log_level = "info";
};

/// Parses the TOML-like key/value file. Errors name the offending key and
/// line. Unknown keys are rejected rather than silently ignored.
AppConfig load_app_config(const std::filesystem::path& path);

}  // namespace safegate

#include "safegate/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>

namespace safegate {

namespace {

struct RawValue {
  enum class Kind { String, Number, Boolean } kind = Kind::String;
  std::string str;
  double number = 0.0;
  bool boolean = false;
  std::size_t line = 0;
  mutable bool used = false;
};

class FlatConfig {
public:
  FlatConfig(std::string file_label, std::filesystem::path base_dir)
      : label_(std::move(file_label)), base_dir_(std::move(base_dir)) {}

  [[noreturn]] void fail(std::size_t line, const std::string& message) const {
    throw Error(errc::config_error,
                label_ + ": line " + std::to_string(line) + ": " + message);
  }

  void insert(const std::string& key, RawValue value) {
    if (values_.count(key) != 0) {
      fail(value.line, "duplicate key '" + key + "'");
    }
    values_.emplace(key, std::move(value));
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const RawValue& require(const std::string& key,
                          RawValue::Kind kind) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
      throw Error(errc::config_error, label_ + ": missing key '" + key + "'");
    }
    if (it->second.kind != kind) {
      fail(it->second.line, "key '" + key + "' has the wrong type");
    }
    it->second.used = true;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? require(key, RawValue::Kind::String).str : fallback;
  }
  double get_number(const std::string& key, double fallback) const {
    return has(key) ? require(key, RawValue::Kind::Number).number : fallback;
  }
  int get_int(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    const RawValue& v = require(key, RawValue::Kind::Number);
    const int i = static_cast<int>(v.number);
    if (static_cast<double>(i) != v.number) {
      fail(v.line, "key '" + key + "' must be an integer");
    }
    return i;
  }
  bool get_bool(const std::string& key, bool fallback) const {
    return has(key) ? require(key, RawValue::Kind::Boolean).boolean : fallback;
  }
  std::optional<std::filesystem::path> get_path(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    std::filesystem::path p = require(key, RawValue::Kind::String).str;
    if (p.is_relative()) p = base_dir_ / p;
    return p;
  }

  void reject_unused() const {
    for (const auto& [key, value] : values_) {
      if (!value.used) fail(value.line, "unknown key '" + key + "'");
    }
  }

  bool section_present(const std::string& prefix) const {
    auto it = values_.lower_bound(prefix + ".");
    return it != values_.end() && it->first.rfind(prefix + ".", 0) == 0;
  }

private:
  std::string label_;
  std::filesystem::path base_dir_;
  std::map<std::string, RawValue> values_;
};

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' &&
        c != '.') {
      return false;
    }
  }
  return true;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

RawValue parse_value(const FlatConfig& cfg, std::size_t line_no,
                     const std::string& key, const std::string& raw) {
  RawValue v;
  v.line = line_no;
  std::string text = strip(raw);
  if (text.empty()) cfg.fail(line_no, "key '" + key + "' has no value");

  if (text.front() == '"') {
    std::string out;
    std::size_t i = 1;
    bool closed = false;
    for (; i < text.size(); ++i) {
      const char c = text[i];
      if (c == '\\') {
        if (i + 1 >= text.size()) break;
        const char esc = text[++i];
        switch (esc) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          default:
            cfg.fail(line_no, "key '" + key + "': unsupported escape '\\" +
                                  std::string(1, esc) + "'");
        }
      } else if (c == '"') {
        closed = true;
        ++i;
        break;
      } else {
        out += c;
      }
    }
    if (!closed) cfg.fail(line_no, "key '" + key + "': unterminated string");
    const std::string rest = strip(text.substr(i));
    if (!rest.empty() && rest.front() != '#') {
      cfg.fail(line_no, "key '" + key + "': trailing characters after string");
    }
    v.kind = RawValue::Kind::String;
    v.str = std::move(out);
    return v;
  }

  const auto hash = text.find('#');
  if (hash != std::string::npos) text = strip(text.substr(0, hash));
  if (text == "true" || text == "false") {
    v.kind = RawValue::Kind::Boolean;
    v.boolean = text == "true";
    return v;
  }
  double number = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, number);
  if (ec != std::errc{} || ptr != end) {
    cfg.fail(line_no, "key '" + key + "': expected a string, number, or boolean");
  }
  v.kind = RawValue::Kind::Number;
  v.number = number;
  return v;
}

FlatConfig parse_flat(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(errc::io_error, "cannot open config " + path.string());
  }
  FlatConfig cfg(path.string(),
                 std::filesystem::absolute(path).parent_path());
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = strip(line);
    if (text.empty() || text.front() == '#') continue;
    if (text.front() == '[') {
      if (text.back() != ']') cfg.fail(line_no, "unterminated section header");
      section = strip(text.substr(1, text.size() - 2));
      if (!valid_key(section)) cfg.fail(line_no, "invalid section name");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      cfg.fail(line_no, "expected 'key = value'");
    }
    const std::string key = strip(text.substr(0, eq));
    if (!valid_key(key)) cfg.fail(line_no, "invalid key '" + key + "'");
    const std::string full_key = section.empty() ? key : section + "." + key;
    cfg.insert(full_key, parse_value(cfg, line_no, full_key, text.substr(eq + 1)));
  }
  return cfg;
}

std::optional<BackendConfig> read_backend(const FlatConfig& cfg,
                                          const std::string& section) {
  if (!cfg.section_present(section)) return std::nullopt;
  BackendConfig b;
  b.base_url = cfg.get_string(section + ".base_url", "");
  if (b.base_url.empty()) {
    throw Error(errc::config_error,
                "config: [" + section + "] requires base_url");
  }
  b.api_key_env = cfg.get_string(section + ".api_key_env", "");
  b.timeout = std::chrono::milliseconds(
      cfg.get_int(section + ".timeout_ms", 30000));
  b.max_retries = cfg.get_int(section + ".max_retries", 2);
  b.retry_backoff = std::chrono::milliseconds(
      cfg.get_int(section + ".retry_backoff_ms", 500));
  b.max_in_flight = cfg.get_int(section + ".max_in_flight", 8);
  if (b.timeout.count() <= 0 || b.max_retries < 0 || b.max_in_flight < 1) {
    throw Error(errc::config_error,
                "config: [" + section + "] has out-of-range values");
  }
  return b;
}

}  // namespace

AppConfig load_app_config(const std::filesystem::path& path) {
  const FlatConfig cfg = parse_flat(path);
  AppConfig app;

  app.generator = read_backend(cfg, "backends.generator");
  app.embedder = read_backend(cfg, "backends.embedder");
  app.rewriter = read_backend(cfg, "backends.rewriter");
  app.paraphrase = read_backend(cfg, "backends.paraphrase");

  app.embedder_dim = cfg.get_int("embedder_dim", 0);
  app.toxicity_library = cfg.get_path("libraries.toxicity");
  app.jailbreak_library = cfg.get_path("libraries.jailbreak");
  app.subspace = cfg.get_path("subspace");
  app.safe_pool = cfg.get_path("safe_pool");
  app.report_sink = cfg.get_path("report_sink");
  app.log_level = cfg.get_string("log_level", "info");

  app.policy.tau_toxicity = cfg.get_number("policy.tau_toxicity", 0.5);
  app.policy.tau_jailbreak = cfg.get_number("policy.tau_jailbreak", 0.5);
  app.policy.corrector =
      corrector_kind_from_string(cfg.get_string("policy.corrector", "rewrite"));
  app.policy.max_passes = cfg.get_int("policy.max_passes", 1);
  app.policy.on_corrector_failure = corrector_failure_policy_from_string(
      cfg.get_string("policy.on_corrector_failure", "refuse_with_static_text"));
  app.policy.refusal_text =
      cfg.get_string("policy.refusal_text", app.policy.refusal_text);
  if (app.policy.tau_toxicity < 0.0 || app.policy.tau_toxicity > 1.0 ||
      app.policy.tau_jailbreak < 0.0 || app.policy.tau_jailbreak > 1.0) {
    throw Error(errc::config_error, "config: policy thresholds must be in [0, 1]");
  }
  if (app.policy.max_passes < 1) {
    throw Error(errc::config_error, "config: policy.max_passes must be >= 1");
  }

  app.gateway_options.log_prompt_text =
      cfg.get_bool("policy.log_prompt_text", false);
  const std::string rescore =
      cfg.get_string("policy.projection_rescore", "text");
  if (rescore == "text") {
    app.gateway_options.projection_rescore = ProjectionRescore::Text;
  } else if (rescore == "embedding") {
    app.gateway_options.projection_rescore = ProjectionRescore::Embedding;
  } else {
    throw Error(errc::config_error,
                "config: policy.projection_rescore must be text or embedding");
  }

  app.server.bind_address = cfg.get_string("server.bind_address", "127.0.0.1");
  app.server.port = cfg.get_int("server.port", 8080);

  cfg.reject_unused();

  if (app.embedder && app.embedder_dim < 1) {
    throw Error(errc::config_error,
                "config: embedder_dim is required with [backends.embedder]");
  }
  return app;
}

}  // namespace safegate

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "safegate/detector.hpp"
#include "safegate/handles.hpp"
#include "safegate/profs.hpp"

namespace safegate {

using json = nlohmann::json;

enum class CorrectorKind { Rewrite, Projection, None };
enum class CorrectorFailurePolicy { RefuseWithStaticText, ReturnOriginalFlagged };
enum class Trigger { None, Toxicity, Jailbreak, Both };

std::string to_string(CorrectorKind kind);
CorrectorKind corrector_kind_from_string(const std::string& s);
std::string to_string(CorrectorFailurePolicy policy);
CorrectorFailurePolicy corrector_failure_policy_from_string(const std::string& s);
std::string to_string(Trigger trigger);

struct ModerationPolicy {
  double tau_toxicity = 0.5;
  double tau_jailbreak = 0.5;
  CorrectorKind corrector = CorrectorKind::Rewrite;
  int max_passes = 1;
  CorrectorFailurePolicy on_corrector_failure =
      CorrectorFailurePolicy::RefuseWithStaticText;
  std::string refusal_text =
      "I can't help with that request. Let me know if there is something else "
      "I can do for you.";
};

struct SignalScores {
  double toxicity = 0.0;
  double jailbreak = 0.0;
  std::string toxicity_best_match;
  std::string jailbreak_best_match;
};

struct StageTimings {
  double generate_ms = 0.0;
  double score_ms = 0.0;
  double correct_ms = 0.0;
  double total_ms = 0.0;
};

/// Audit record for one request. Invariants: corrected is true exactly when a
/// signal triggered and a corrector was configured; scores_after is present
/// exactly when corrected.
struct ModerationReport {
  std::string request_id;
  std::string prompt_hash;
  std::optional<std::string> prompt_text;  // only with the audit flag on
  std::string original_text;
  std::string final_text;
  SignalScores scores_before;
  std::optional<SignalScores> scores_after;
  bool corrected = false;
  Trigger trigger = Trigger::None;
  std::string corrector_used;
  int passes = 0;
  StageTimings timings;
  std::map<std::string, std::string> backend_meta;
};

json report_to_json(const ModerationReport& report);

/// Append-only JSONL sink; writes are serialized so lines never interleave.
class ReportSink {
public:
  explicit ReportSink(const std::filesystem::path& path);
  void append(const json& line);

private:
  std::ofstream out_;
  std::mutex mutex_;
};

struct GatewayHandles {
  std::shared_ptr<TextGenerator> generator;
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<Rewriter> rewriter;  // required for the rewrite corrector
  std::shared_ptr<const ToxicSubspace> subspace;   // projection corrector
  std::shared_ptr<const ExampleLibrary> safe_pool; // projection corrector
  std::shared_ptr<const ExampleLibrary> toxicity_library;
  std::shared_ptr<const ExampleLibrary> jailbreak_library;
};

/// How the projection corrector rescored: on the retrieved replacement text
/// (the text actually returned) or on the projected embedding itself. The
/// report labels whichever was used.
enum class ProjectionRescore { Text, Embedding };

struct GatewayOptions {
  ProjectionRescore projection_rescore = ProjectionRescore::Text;
  bool log_prompt_text = false;
};

struct ModerationOutcome {
  std::string final_text;
  ModerationReport report;
};

/// The two-stage pipeline: generate, score both signals off one embedding,
/// gate on the calibrated thresholds (strict >, OR across signals), correct,
/// rescore. Immutable state shared across threads; safe for concurrent
/// moderate() calls.
class Gateway {
public:
  Gateway(ModerationPolicy policy, GatewayHandles handles,
          GatewayOptions options = {}, ReportSink* sink = nullptr);

  ModerationOutcome moderate(const std::string& prompt,
                             std::string request_id = {});

  /// One embedding call shared across both library scans.
  SignalScores score_only(const std::string& text) const;

  const ModerationPolicy& policy() const noexcept { return policy_; }

private:
  struct CorrectionStep {
    std::string text;
    std::optional<Embedding> projected;
    bool annihilated = false;
  };

  CorrectionStep apply_corrector(const std::string& current,
                                 ModerationReport& report) const;
  SignalScores score_embedding_pair(const Embedding& unit) const;

  ModerationPolicy policy_;
  GatewayHandles handles_;
  GatewayOptions options_;
  ReportSink* sink_;
};

/// HTTP face of the gateway. Endpoints: POST /v1/generate, POST /v1/score,
/// GET /v1/health, GET /v1/policy. Errors come back as
/// {"error":{"code","message"}} with a 4xx/5xx status.
class GatewayServer {
public:
  explicit GatewayServer(Gateway& gateway);
  ~GatewayServer();

  /// Blocks until stop(). False when the address can't be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and serves from a background thread (tests).
  int bind_any_port(const std::string& host);
  void listen_after_bind();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace safegate

#include "safegate/gateway.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>

#include "safegate/backends.hpp"
#include "safegate/textutil.hpp"

namespace safegate {

using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string next_request_id() {
  static std::atomic<std::uint64_t> counter{0};
  return "req-" + std::to_string(counter.fetch_add(1) + 1);
}

}  // namespace

std::string to_string(CorrectorKind kind) {
  switch (kind) {
    case CorrectorKind::Rewrite: return "rewrite";
    case CorrectorKind::Projection: return "projection";
    case CorrectorKind::None: return "none";
  }
  return "none";
}

CorrectorKind corrector_kind_from_string(const std::string& s) {
  if (s == "rewrite") return CorrectorKind::Rewrite;
  if (s == "projection") return CorrectorKind::Projection;
  if (s == "none") return CorrectorKind::None;
  throw Error(errc::config_error, "unknown corrector '" + s + "'");
}

std::string to_string(CorrectorFailurePolicy policy) {
  return policy == CorrectorFailurePolicy::RefuseWithStaticText
             ? "refuse_with_static_text"
             : "return_original_flagged";
}

CorrectorFailurePolicy corrector_failure_policy_from_string(const std::string& s) {
  if (s == "refuse_with_static_text")
    return CorrectorFailurePolicy::RefuseWithStaticText;
  if (s == "return_original_flagged")
    return CorrectorFailurePolicy::ReturnOriginalFlagged;
  throw Error(errc::config_error, "unknown on_corrector_failure '" + s + "'");
}

std::string to_string(Trigger trigger) {
  switch (trigger) {
    case Trigger::None: return "none";
    case Trigger::Toxicity: return "toxicity";
    case Trigger::Jailbreak: return "jailbreak";
    case Trigger::Both: return "both";
  }
  return "none";
}

json report_to_json(const ModerationReport& report) {
  const auto scores = [](const SignalScores& s) {
    return json{{"toxicity", s.toxicity},
                {"jailbreak", s.jailbreak},
                {"toxicity_best_match", s.toxicity_best_match},
                {"jailbreak_best_match", s.jailbreak_best_match}};
  };
  json j = {{"request_id", report.request_id},
            {"prompt_hash", report.prompt_hash},
            {"original_text", report.original_text},
            {"final_text", report.final_text},
            {"scores_before", scores(report.scores_before)},
            {"corrected", report.corrected},
            {"trigger", to_string(report.trigger)},
            {"corrector_used", report.corrector_used},
            {"passes", report.passes},
            {"timings_ms",
             {{"generate", report.timings.generate_ms},
              {"score", report.timings.score_ms},
              {"correct", report.timings.correct_ms},
              {"total", report.timings.total_ms}}},
            {"backend_meta", report.backend_meta}};
  if (report.scores_after) j["scores_after"] = scores(*report.scores_after);
  if (report.prompt_text) j["prompt_text"] = *report.prompt_text;
  return j;
}

ReportSink::ReportSink(const std::filesystem::path& path)
    : out_(path, std::ios_base::app) {
  if (!out_) {
    throw Error(errc::io_error, "cannot open report sink " + path.string());
  }
}

void ReportSink::append(const json& line) {
  std::lock_guard<std::mutex> lock(mutex_);
  out_ << line.dump() << '\n';
  out_.flush();
}

Gateway::Gateway(ModerationPolicy policy, GatewayHandles handles,
                 GatewayOptions options, ReportSink* sink)
    : policy_(std::move(policy)),
      handles_(std::move(handles)),
      options_(options),
      sink_(sink) {
  if (policy_.tau_toxicity < 0.0 || policy_.tau_toxicity > 1.0 ||
      policy_.tau_jailbreak < 0.0 || policy_.tau_jailbreak > 1.0) {
    throw Error(errc::config_error, "gateway: thresholds must be in [0, 1]");
  }
  if (policy_.max_passes < 1) {
    throw Error(errc::config_error, "gateway: max_passes must be >= 1");
  }
  if (!handles_.embedder || !handles_.toxicity_library ||
      !handles_.jailbreak_library) {
    throw Error(errc::config_error,
                "gateway: embedder and both libraries are required");
  }
  if (policy_.corrector == CorrectorKind::Rewrite && !handles_.rewriter) {
    throw Error(errc::config_error, "gateway: rewrite corrector needs a rewriter");
  }
  if (policy_.corrector == CorrectorKind::Projection &&
      (!handles_.subspace || !handles_.safe_pool)) {
    throw Error(errc::config_error,
                "gateway: projection corrector needs a subspace and safe pool");
  }
}

SignalScores Gateway::score_embedding_pair(const Embedding& unit) const {
  SignalScores scores;
  const DetectionScore tox = score_embedding(unit, *handles_.toxicity_library);
  const DetectionScore jb = score_embedding(unit, *handles_.jailbreak_library);
  scores.toxicity = tox.value;
  scores.jailbreak = jb.value;
  scores.toxicity_best_match = tox.best_match_id;
  scores.jailbreak_best_match = jb.best_match_id;
  return scores;
}

SignalScores Gateway::score_only(const std::string& text) const {
  const std::string t = trimmed(text);
  if (t.empty()) throw Error(errc::empty_text, "score_only: empty text");
  Embedding e = handles_.embedder->embed(t);
  if (e.size() != handles_.toxicity_library->dim ||
      e.size() != handles_.jailbreak_library->dim) {
    throw Error(errc::dimension_mismatch,
                "score_only: embedder dim does not match the libraries");
  }
  return score_embedding_pair(normalize(e));
}

Gateway::CorrectionStep Gateway::apply_corrector(const std::string& current,
                                                 ModerationReport& report) const {
  CorrectionStep step;
  if (policy_.corrector == CorrectorKind::Rewrite) {
    step.text = handles_.rewriter->rewrite(current);
    return step;
  }
  // projection: move the embedding out of the toxic subspace, then realize it
  // as text from the safe pool
  Embedding e = normalize(handles_.embedder->embed(trimmed(current)));
  Embedding projected = project(e, *handles_.subspace);
  step.projected = projected;
  if (projected.norm() == 0.0) {
    step.annihilated = true;
    step.text = policy_.refusal_text;
    report.backend_meta["projection_annihilated"] = "true";
    return step;
  }
  const SafeMatch match = nearest_safe_response(projected, *handles_.safe_pool);
  step.text = match.text;
  report.backend_meta["safe_pool_match"] = match.id;
  return step;
}

ModerationOutcome Gateway::moderate(const std::string& prompt,
                                    std::string request_id) {
  if (trimmed(prompt).empty()) {
    throw Error(errc::empty_text, "moderate: empty prompt");
  }
  const auto t_total = Clock::now();
  ModerationReport report;
  report.request_id = request_id.empty() ? next_request_id() : std::move(request_id);
  report.prompt_hash = fnv1a_hex(prompt);
  if (options_.log_prompt_text) report.prompt_text = prompt;
  report.corrector_used = to_string(policy_.corrector);
  report.backend_meta["embedder"] = handles_.embedder->identity();
  if (policy_.corrector == CorrectorKind::Projection) {
    report.backend_meta["projection_rescore"] =
        options_.projection_rescore == ProjectionRescore::Text ? "text"
                                                               : "embedding";
  }

  const auto t_generate = Clock::now();
  report.original_text = handles_.generator->generate(prompt);
  report.timings.generate_ms = ms_since(t_generate);

  const auto t_score = Clock::now();
  report.scores_before = score_only(report.original_text);
  report.timings.score_ms = ms_since(t_score);

  const bool over_tox = report.scores_before.toxicity > policy_.tau_toxicity;
  const bool over_jb = report.scores_before.jailbreak > policy_.tau_jailbreak;
  report.trigger = over_tox ? (over_jb ? Trigger::Both : Trigger::Toxicity)
                            : (over_jb ? Trigger::Jailbreak : Trigger::None);

  std::string final_text = report.original_text;
  if (report.trigger != Trigger::None &&
      policy_.corrector != CorrectorKind::None) {
    report.corrected = true;
    const auto t_correct = Clock::now();
    std::string current = report.original_text;
    SignalScores after;
    for (int pass = 1; pass <= policy_.max_passes; ++pass) {
      report.passes = pass;
      CorrectionStep step;
      try {
        step = apply_corrector(current, report);
      } catch (const BackendException& e) {
        report.backend_meta["corrector_failure"] = e.error().detail;
        if (policy_.on_corrector_failure ==
            CorrectorFailurePolicy::RefuseWithStaticText) {
          current = policy_.refusal_text;
          after = score_only(current);
        } else {
          current = report.original_text;
          after = report.scores_before;  // same text, same deterministic scores
        }
        break;
      }
      current = step.text;
      if (options_.projection_rescore == ProjectionRescore::Embedding &&
          step.projected && !step.annihilated) {
        after = score_embedding_pair(normalize(*step.projected));
      } else {
        after = score_only(current);
      }
      if (after.toxicity <= policy_.tau_toxicity &&
          after.jailbreak <= policy_.tau_jailbreak) {
        break;
      }
      // Still above a gate: remaining passes re-correct the corrected text.
      // Insufficient detox after the last pass is reported, not refused.
    }
    report.timings.correct_ms = ms_since(t_correct);
    report.scores_after = after;
    final_text = current;
  }

  report.final_text = final_text;
  report.timings.total_ms = ms_since(t_total);
  if (sink_ != nullptr) sink_->append(report_to_json(report));
  return {final_text, report};
}

// ---------------------------------------------------------------------------
// HTTP server
// ---------------------------------------------------------------------------

struct GatewayServer::Impl {
  Gateway& gateway;
  httplib::Server server;
  std::thread worker;

  explicit Impl(Gateway& gw) : gateway(gw) {}
};

namespace {

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                  "application/json");
}

int status_for(const std::string& code) {
  if (code == errc::empty_text || code == errc::bad_request ||
      code == errc::malformed_line) {
    return 400;
  }
  if (code.rfind("backend_", 0) == 0) return 502;
  return 500;
}

}  // namespace

GatewayServer::GatewayServer(Gateway& gateway)
    : impl_(std::make_unique<Impl>(gateway)) {
  auto& server = impl_->server;
  auto& gw = impl_->gateway;

  server.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"status", "ok"}}.dump(), "application/json");
  });

  server.Get("/v1/policy", [&gw](const httplib::Request&, httplib::Response& res) {
    const auto& p = gw.policy();
    res.set_content(json{{"tau_toxicity", p.tau_toxicity},
                         {"tau_jailbreak", p.tau_jailbreak},
                         {"corrector", to_string(p.corrector)},
                         {"max_passes", p.max_passes},
                         {"on_corrector_failure", to_string(p.on_corrector_failure)}}
                        .dump(),
                    "application/json");
  });

  server.Post("/v1/generate", [&gw](const httplib::Request& req,
                                    httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      send_error(res, 400, errc::bad_request, "request body is not JSON");
      return;
    }
    if (!body.contains("prompt") || !body["prompt"].is_string()) {
      send_error(res, 400, errc::bad_request, "missing string field 'prompt'");
      return;
    }
    std::string request_id = body.value("request_id", std::string{});
    try {
      auto outcome = gw.moderate(body["prompt"].get<std::string>(),
                                 std::move(request_id));
      res.set_content(json{{"final_text", outcome.final_text},
                           {"report", report_to_json(outcome.report)}}
                          .dump(),
                      "application/json");
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  server.Post("/v1/score", [&gw](const httplib::Request& req,
                                 httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      send_error(res, 400, errc::bad_request, "request body is not JSON");
      return;
    }
    if (!body.contains("text") || !body["text"].is_string()) {
      send_error(res, 400, errc::bad_request, "missing string field 'text'");
      return;
    }
    try {
      const SignalScores scores = gw.score_only(body["text"].get<std::string>());
      res.set_content(
          json{{"toxicity", scores.toxicity},
               {"jailbreak", scores.jailbreak},
               {"best_match",
                {{"toxicity", scores.toxicity_best_match},
                 {"jailbreak", scores.jailbreak_best_match}}}}
              .dump(),
          "application/json");
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });
}

GatewayServer::~GatewayServer() {
  stop();
}

bool GatewayServer::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

int GatewayServer::bind_any_port(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

void GatewayServer::listen_after_bind() {
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void GatewayServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace safegate

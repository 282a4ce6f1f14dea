#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "safegate/backends.hpp"
#include "safegate/calibration.hpp"
#include "safegate/config.hpp"
#include "safegate/datasets.hpp"
#include "safegate/evaluation.hpp"
#include "safegate/gateway.hpp"
#include "safegate/jsonl.hpp"
#include "safegate/profs.hpp"
#include "safegate/textutil.hpp"

namespace {

using namespace safegate;

constexpr int kOk = 0;
constexpr int kOperationalError = 1;
constexpr int kUsageError = 2;

AppConfig require_config(const std::string& config_path) {
  if (config_path.empty()) {
    throw Error(errc::config_error, "this command requires --config");
  }
  return load_app_config(config_path);
}

std::shared_ptr<Embedder> make_embedder(const AppConfig& config) {
  if (!config.embedder) {
    throw Error(errc::config_error,
                "config: [backends.embedder] is required for this command");
  }
  return std::make_shared<HttpEmbedder>(*config.embedder, config.embedder_dim);
}

std::shared_ptr<Rewriter> make_rewriter(const AppConfig& config) {
  if (!config.rewriter) {
    throw Error(errc::config_error,
                "config: [backends.rewriter] is required for this command");
  }
  return std::make_shared<HttpRewriter>(*config.rewriter);
}

std::filesystem::path require_library_path(const AppConfig& config,
                                           SignalKind kind) {
  const auto& path = kind == SignalKind::Toxicity ? config.toxicity_library
                                                  : config.jailbreak_library;
  if (!path) {
    throw Error(errc::config_error, "config: [libraries] " + to_string(kind) +
                                        " path is required for this command");
  }
  return *path;
}

std::vector<TextRecord> read_text_records(const std::filesystem::path& path) {
  std::vector<TextRecord> records;
  for_each_jsonl_line(path, [&](std::size_t, const json& j) {
    records.push_back(
        {j.at("id").get<std::string>(), j.at("text").get<std::string>()});
  });
  if (records.empty()) {
    throw Error(errc::empty_set, path.string() + ": no text records");
  }
  return records;
}

struct TranscriptRecord {
  std::string id;
  std::string transcript;
};

std::vector<TranscriptRecord> read_transcripts(const std::filesystem::path& path) {
  std::vector<TranscriptRecord> records;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& j) {
    TranscriptRecord rec;
    rec.id = j.value("id", "pair-" + std::to_string(line_no));
    rec.transcript = j.at("transcript").get<std::string>();
    records.push_back(std::move(rec));
  });
  if (records.empty()) {
    throw Error(errc::empty_set, path.string() + ": no transcripts");
  }
  return records;
}

int run_serve(const std::string& config_path) {
  const AppConfig config = require_config(config_path);

  GatewayHandles handles;
  if (!config.generator) {
    throw Error(errc::config_error, "config: [backends.generator] is required");
  }
  handles.generator = std::make_shared<HttpGenerator>(*config.generator);
  handles.embedder = make_embedder(config);
  handles.toxicity_library = std::make_shared<const ExampleLibrary>(
      load_library(require_library_path(config, SignalKind::Toxicity)));
  handles.jailbreak_library = std::make_shared<const ExampleLibrary>(
      load_library(require_library_path(config, SignalKind::Jailbreak)));
  if (config.policy.corrector == CorrectorKind::Rewrite) {
    handles.rewriter = make_rewriter(config);
  } else if (config.policy.corrector == CorrectorKind::Projection) {
    if (!config.subspace || !config.safe_pool) {
      throw Error(errc::config_error,
                  "config: subspace and safe_pool are required for the "
                  "projection corrector");
    }
    handles.subspace =
        std::make_shared<const ToxicSubspace>(load_subspace(*config.subspace));
    handles.safe_pool =
        std::make_shared<const ExampleLibrary>(load_library(*config.safe_pool));
  }

  std::unique_ptr<ReportSink> sink;
  if (config.report_sink) sink = std::make_unique<ReportSink>(*config.report_sink);

  Gateway gateway(config.policy, std::move(handles), config.gateway_options,
                  sink.get());
  GatewayServer server(gateway);

  static GatewayServer* active = nullptr;
  active = &server;
  std::signal(SIGINT, [](int) { if (active) active->stop(); });
  std::signal(SIGTERM, [](int) { if (active) active->stop(); });

  std::cerr << "listening on " << config.server.bind_address << ":"
            << config.server.port << "\n";
  if (!server.listen(config.server.bind_address, config.server.port)) {
    throw Error(errc::io_error, "failed to bind " + config.server.bind_address +
                                    ":" + std::to_string(config.server.port));
  }
  return kOk;
}

int run_calibrate(const std::string& config_path, const std::string& pairs_path,
                  const std::string& kind_name, double max_rate, double step,
                  const std::string& csv_path) {
  const SignalKind kind = signal_kind_from_string(kind_name);
  SweepConfig sweep_config;
  sweep_config.max_correction_rate = max_rate;
  sweep_config.grid_step = step;

  // Two input shapes: precomputed {"s_llm","s_corrected"} pairs, or raw
  // {"original_text"} responses that still need scoring through the backends.
  bool raw_mode = false;
  for_each_jsonl_line(pairs_path, [&](std::size_t, const json& j) {
    if (!j.contains("s_llm")) raw_mode = true;
  });

  std::vector<ScorePair> pairs;
  json failures = json::array();
  if (raw_mode) {
    const AppConfig config = require_config(config_path);
    auto embedder = make_embedder(config);
    auto rewriter = make_rewriter(config);
    const ExampleLibrary lib = load_library(require_library_path(config, kind));
    const auto items = read_collect_items_jsonl(pairs_path);
    auto collected = collect_pairs(items, *rewriter, *embedder, lib);
    pairs = std::move(collected.pairs);
    for (const auto& f : collected.failures) {
      failures.push_back(
          {{"id", f.id}, {"stage", f.stage}, {"detail", f.detail}});
    }
  } else {
    pairs = read_score_pairs_jsonl(pairs_path);
  }

  const CalibrationResult result = sweep(pairs, sweep_config, kind);
  json out = calibration_result_to_json(result);
  if (!failures.empty()) out["collect_failures"] = failures;
  std::cout << out.dump(2) << "\n";

  if (!csv_path.empty()) {
    auto csv = open_for_write(csv_path);
    csv << curve_to_csv(result);
  }
  return kOk;
}

int run_build_library(const std::string& config_path, const std::string& kind_name,
                      const std::string& input_path, const std::string& out_path) {
  const AppConfig config = require_config(config_path);
  auto embedder = make_embedder(config);
  const auto records = read_text_records(input_path);
  ExampleLibrary lib =
      build_library(records, signal_kind_from_string(kind_name), *embedder,
                    input_path + " via " + embedder->identity());
  save_library(lib, out_path);
  std::cerr << "wrote " << lib.entries.size() << " entries to " << out_path << "\n";
  return kOk;
}

int run_fit_subspace(const std::string& config_path, const std::string& pairs_path,
                     int k, bool no_mean, int min_pairs,
                     const std::string& out_path) {
  ProjectionConfig projection_config;
  projection_config.k_components = k;
  projection_config.include_mean_direction = !no_mean;
  projection_config.min_pairs = min_pairs;

  // Accept either precomputed embedding pairs or text pairs that need the
  // embedding backend.
  bool text_mode = false;
  for_each_jsonl_line(pairs_path, [&](std::size_t, const json& j) {
    if (!j.contains("toxic")) text_mode = true;
  });

  PairedEmbeddings data;
  if (text_mode) {
    const AppConfig config = require_config(config_path);
    auto embedder = make_embedder(config);
    const auto pairs = read_pairs(pairs_path);
    for (const auto& p : pairs) {
      EmbeddingPair ep;
      ep.id = p.id;
      ep.toxic = embedder->embed(trimmed(p.rejected));
      ep.nontoxic = embedder->embed(trimmed(p.chosen));
      if (data.pairs.empty()) data.dim = ep.toxic.size();
      data.pairs.push_back(std::move(ep));
    }
    if (data.pairs.empty()) {
      throw Error(errc::empty_set, pairs_path + ": no pairs");
    }
  } else {
    data = read_paired_embeddings_jsonl(pairs_path);
  }

  const ToxicSubspace subspace = fit_subspace(data, projection_config);
  save_subspace(subspace, out_path);
  std::cerr << "fit rank-" << subspace.basis.cols() << " subspace from "
            << data.pairs.size() << " pairs\n";
  return kOk;
}

int run_extract(const std::string& chosen_path, const std::string& rejected_path,
                const std::string& out_path) {
  const auto chosen = read_transcripts(chosen_path);
  const auto rejected = read_transcripts(rejected_path);
  if (chosen.size() != rejected.size()) {
    throw Error(errc::bad_request,
                "chosen and rejected files differ in length (" +
                    std::to_string(chosen.size()) + " vs " +
                    std::to_string(rejected.size()) + ")");
  }
  std::vector<ResponsePair> pairs;
  std::size_t failed = 0;
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    try {
      pairs.push_back(build_pair(chosen[i].id, chosen[i].transcript,
                                 rejected[i].transcript));
      if (pairs.back().degenerate) ++degenerate;
    } catch (const Error& e) {
      ++failed;
      std::cerr << "skipped: " << e.what() << "\n";
    }
  }
  if (pairs.empty()) {
    throw Error(errc::all_items_failed, "extract: every transcript pair failed");
  }
  write_pairs(pairs, out_path);
  std::cerr << "extracted " << pairs.size() << " pairs (" << degenerate
            << " degenerate, " << failed << " failed)\n";
  return kOk;
}

int run_score(const std::string& config_path, const std::string& text,
              const std::string& file_path) {
  const AppConfig config = require_config(config_path);
  GatewayHandles handles;
  handles.embedder = make_embedder(config);
  handles.generator = nullptr;
  handles.toxicity_library = std::make_shared<const ExampleLibrary>(
      load_library(require_library_path(config, SignalKind::Toxicity)));
  handles.jailbreak_library = std::make_shared<const ExampleLibrary>(
      load_library(require_library_path(config, SignalKind::Jailbreak)));

  std::string subject = text;
  if (!file_path.empty()) {
    std::ifstream in(file_path);
    if (!in) throw Error(errc::io_error, "cannot open " + file_path);
    subject.assign(std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>());
  }

  ModerationPolicy policy = config.policy;
  policy.corrector = CorrectorKind::None;
  Gateway gateway(policy, std::move(handles), config.gateway_options);
  const SignalScores scores = gateway.score_only(subject);
  std::cout << json{{"toxicity", scores.toxicity},
                    {"jailbreak", scores.jailbreak},
                    {"best_match",
                     {{"toxicity", scores.toxicity_best_match},
                      {"jailbreak", scores.jailbreak_best_match}}}}
                   .dump(2)
            << "\n";
  return kOk;
}

int run_evaluate(const std::string& config_path, const std::string& before_path,
                 const std::string& after_path, const std::string& label,
                 const std::string& format_name, const std::string& drift_path,
                 const std::string& drift_json_path) {
  const auto before = read_scores_jsonl(before_path);
  const auto after = read_scores_jsonl(after_path);
  const ComparisonRow row = compare(label, before, after);

  std::optional<DriftReport> drift;
  if (!drift_path.empty()) {
    const AppConfig config = require_config(config_path);
    auto detoxifier = make_rewriter(config);
    if (!config.paraphrase) {
      throw Error(errc::config_error,
                  "config: [backends.paraphrase] is required for --drift-pairs");
    }
    HttpParaphraseJudge judge(*config.paraphrase);
    const auto pairs = read_sentence_pairs(drift_path);
    drift = semantic_drift(pairs, *detoxifier, judge);
    if (!drift_json_path.empty()) {
      auto out = open_for_write(drift_json_path);
      out << drift_report_to_json(*drift).dump(2) << "\n";
    }
  }

  const ReportFormat format = format_name == "csv" ? ReportFormat::Csv
                                                   : ReportFormat::Markdown;
  const std::vector<ComparisonRow> rows{row};
  std::cout << render_report(rows, drift ? &*drift : nullptr, format);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safegate: score, gate, and correct model responses"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "path to the config file")
      ->expected(1);

  auto* serve = app.add_subcommand("serve", "run the moderation gateway");

  auto* calibrate =
      app.add_subcommand("calibrate", "sweep thresholds over score pairs");
  std::string cal_pairs, cal_kind = "toxicity", cal_csv;
  double cal_rate = 0.5, cal_step = 0.01;
  calibrate->add_option("--pairs", cal_pairs, "score-pair or response JSONL")
      ->required();
  calibrate->add_option("--kind", cal_kind, "toxicity or jailbreak");
  calibrate->add_option("--max-rate", cal_rate, "correction-rate cap");
  calibrate->add_option("--step", cal_step, "grid step");
  calibrate->add_option("--csv", cal_csv, "write the gain curve CSV here");

  auto* build_lib =
      app.add_subcommand("build-library", "embed texts into a score library");
  std::string bl_kind, bl_input, bl_out;
  build_lib->add_option("--kind", bl_kind, "toxicity or jailbreak")->required();
  build_lib->add_option("--input", bl_input, "texts JSONL ({id,text})")
      ->required();
  build_lib->add_option("--out", bl_out, "library output path")->required();

  auto* fit = app.add_subcommand("fit-subspace",
                                 "fit the toxic subspace from paired data");
  std::string fs_pairs, fs_out;
  int fs_k = 2, fs_min_pairs = 10;
  bool fs_no_mean = false;
  fit->add_option("--pairs", fs_pairs, "paired embeddings or texts JSONL")
      ->required();
  fit->add_option("--k", fs_k, "principal components to keep");
  fit->add_flag("--no-mean", fs_no_mean, "skip the mean-difference direction");
  fit->add_option("--min-pairs", fs_min_pairs, "minimum pair count");
  fit->add_option("--out", fs_out, "subspace output path")->required();

  auto* extract =
      app.add_subcommand("extract", "extract response pairs from transcripts");
  std::string ex_chosen, ex_rejected, ex_out;
  extract->add_option("--chosen", ex_chosen, "chosen transcripts JSONL")
      ->required();
  extract->add_option("--rejected", ex_rejected, "rejected transcripts JSONL")
      ->required();
  extract->add_option("--out", ex_out, "pair output path")->required();

  auto* score = app.add_subcommand("score", "score a text against the libraries");
  std::string sc_text, sc_file;
  score->add_option("--text", sc_text, "text to score");
  score->add_option("--file", sc_file, "file whose content is scored");

  auto* evaluate =
      app.add_subcommand("evaluate", "before/after comparison report");
  std::string ev_before, ev_after, ev_label = "run", ev_format = "markdown";
  std::string ev_drift, ev_drift_json;
  evaluate->add_option("--before", ev_before, "scores JSONL before correction")
      ->required();
  evaluate->add_option("--after", ev_after, "scores JSONL after correction")
      ->required();
  evaluate->add_option("--label", ev_label, "row label");
  evaluate->add_option("--format", ev_format, "markdown or csv")
      ->check(CLI::IsMember({"markdown", "csv"}));
  evaluate->add_option("--drift-pairs", ev_drift, "sentence-pair JSONL");
  evaluate->add_option("--drift-json", ev_drift_json, "drift report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return kUsageError;
  }

  try {
    if (app.got_subcommand(serve)) return run_serve(config_path);
    if (app.got_subcommand(calibrate)) {
      return run_calibrate(config_path, cal_pairs, cal_kind, cal_rate, cal_step,
                           cal_csv);
    }
    if (app.got_subcommand(build_lib)) {
      return run_build_library(config_path, bl_kind, bl_input, bl_out);
    }
    if (app.got_subcommand(fit)) {
      return run_fit_subspace(config_path, fs_pairs, fs_k, fs_no_mean,
                              fs_min_pairs, fs_out);
    }
    if (app.got_subcommand(extract)) {
      return run_extract(ex_chosen, ex_rejected, ex_out);
    }
    if (app.got_subcommand(score)) {
      if (sc_text.empty() == sc_file.empty()) {
        std::cerr << "score requires exactly one of --text or --file\n\n"
                  << score->help() << "\n";
        return kUsageError;
      }
      return run_score(config_path, sc_text, sc_file);
    }
    if (app.got_subcommand(evaluate)) {
      return run_evaluate(config_path, ev_before, ev_after, ev_label, ev_format,
                          ev_drift, ev_drift_json);
    }
    return kUsageError;
  } catch (const safegate::Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return kOperationalError;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return kOperationalError;
  }
}

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "safegate/datasets.hpp"
#include "safegate/handles.hpp"

namespace safegate {

using json = nlohmann::json;

struct ScoreStats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // population form (1/n)
  double min = 0.0;
  double max = 0.0;
};

ScoreStats stats(std::span<const double> values);

struct ComparisonRow {
  std::string label;
  ScoreStats before;
  ScoreStats after;
  double mean_reduction_abs = 0.0;
  std::optional<double> mean_reduction_pct;  // undefined on a zero baseline
};

ComparisonRow compare(const std::string& label, std::span<const double> before,
                      std::span<const double> after);

struct DriftReport {
  std::size_t n_pairs = 0;  // items included in both passes
  double acc_original = 0.0;
  double acc_detoxified = 0.0;
  double delta = 0.0;  // acc_original - acc_detoxified
  std::vector<std::string> excluded_ids;
};

/// Paraphrase accuracy before and after detoxifying each sentence
/// independently. Items failing any backend call drop out of both passes so
/// the accuracies stay comparable.
DriftReport semantic_drift(std::span<const SentencePair> pairs,
                           Rewriter& detoxifier, ParaphraseJudge& judge);

enum class ReportFormat { Markdown, Csv };

/// Deterministic, byte-stable rendering. Undefined percentages show as n/a.
std::string render_report(std::span<const ComparisonRow> rows,
                          const DriftReport* drift, ReportFormat format);

json drift_report_to_json(const DriftReport& drift);

/// Reads {"id","score"} JSONL, scores in [0, 1].
std::vector<double> read_scores_jsonl(const std::filesystem::path& path);

}  // namespace safegate

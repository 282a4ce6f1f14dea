#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "safegate/detector.hpp"
#include "safegate/handles.hpp"

namespace safegate {

using json = nlohmann::json;

/// One calibration observation: the signal score of an original response and
/// of its corrected counterpart.
struct ScorePair {
  std::string id;
  double s_llm = 0.0;
  double s_corrected = 0.0;
};

struct SweepConfig {
  double grid_start = 0.0;
  double grid_end = 1.0;
  double grid_step = 0.01;
  double max_correction_rate = 0.5;
  // Ties between equal-gain thresholds resolve to the smallest tau: at equal
  // gain the lower threshold corrects more, the conservative choice.
};

struct GainPoint {
  double tau = 0.0;
  std::optional<double> gain;  // undefined when nothing exceeds tau
  double correction_rate = 0.0;
  std::size_t n_corrected = 0;
  bool feasible = false;
};

struct CalibrationResult {
  SignalKind kind = SignalKind::Toxicity;
  double tau_star = 0.0;
  double gain_at_star = 0.0;
  std::vector<GainPoint> curve;  // full grid, plot-ready
  SweepConfig config;
  // Maximizer ignoring the correction-rate cap, kept alongside the
  // constrained pick so reports show both.
  std::optional<double> tau_star_unconstrained;
  std::optional<double> gain_unconstrained;
};

/// Mean score reduction over responses whose original score strictly exceeds
/// tau. Gain is undefined (not zero) when the selection is empty.
GainPoint gain_at(std::span<const ScorePair> pairs, double tau,
                  const SweepConfig& config);

/// Evaluates gain_at on every grid point (start + i*step, final point clamped
/// to the end) and picks the feasible gain maximizer, smallest tau on ties.
CalibrationResult sweep(std::span<const ScorePair> pairs,
                        const SweepConfig& config, SignalKind kind);

struct CollectItem {
  std::string id;
  std::string original_text;
};

struct CollectFailure {
  std::string id;
  std::string stage;  // score_original | rewrite | score_corrected
  std::string detail;
};

struct CollectResult {
  std::vector<ScorePair> pairs;        // input order, failures skipped
  std::vector<CollectFailure> failures;
};

/// Scores every response before and after correction. Per-item failures are
/// recorded and skipped; only a fully failed batch is fatal.
CollectResult collect_pairs(std::span<const CollectItem> items,
                            Rewriter& corrector, Embedder& embedder,
                            const ExampleLibrary& lib, int max_in_flight = 4);

json calibration_result_to_json(const CalibrationResult& result);
std::string curve_to_csv(const CalibrationResult& result);

std::vector<ScorePair> read_score_pairs_jsonl(const std::filesystem::path& path);
std::vector<CollectItem> read_collect_items_jsonl(const std::filesystem::path& path);

}  // namespace safegate

#include "safegate/calibration.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <thread>
#include <unordered_set>

#include "safegate/jsonl.hpp"

namespace safegate {

namespace {

void validate(const SweepConfig& config) {
  if (!(config.grid_start < config.grid_end) || !(config.grid_step > 0.0)) {
    throw Error(errc::config_error, "sweep: invalid grid");
  }
  if (config.max_correction_rate <= 0.0 || config.max_correction_rate > 1.0) {
    throw Error(errc::config_error, "sweep: max_correction_rate must be in (0, 1]");
  }
}

std::string shortest(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

}  // namespace

GainPoint gain_at(std::span<const ScorePair> pairs, double tau,
                  const SweepConfig& config) {
  if (pairs.empty()) throw Error(errc::empty_set, "gain_at: no score pairs");
  std::size_t selected = 0;
  double gap_sum = 0.0;
  for (const auto& p : pairs) {
    if (p.s_llm > tau) {  // strict: ties at the threshold are not corrected
      ++selected;
      gap_sum += p.s_llm - p.s_corrected;
    }
  }
  GainPoint g;
  g.tau = tau;
  g.n_corrected = selected;
  g.correction_rate = static_cast<double>(selected) / static_cast<double>(pairs.size());
  if (selected > 0) g.gain = gap_sum / static_cast<double>(selected);
  g.feasible = g.gain.has_value() && g.correction_rate <= config.max_correction_rate;
  return g;
}

CalibrationResult sweep(std::span<const ScorePair> pairs,
                        const SweepConfig& config, SignalKind kind) {
  if (pairs.empty()) throw Error(errc::empty_set, "sweep: no score pairs");
  validate(config);
  {
    std::unordered_set<std::string> ids;
    for (const auto& p : pairs) {
      if (!ids.insert(p.id).second) {
        throw Error(errc::duplicate_id, "sweep: duplicate pair id '" + p.id + "'");
      }
    }
  }

  CalibrationResult result;
  result.kind = kind;
  result.config = config;

  // Grid as start + i*step keeps points free of accumulation drift; the last
  // point is the clamped upper endpoint.
  for (std::size_t i = 0;; ++i) {
    double tau = config.grid_start + static_cast<double>(i) * config.grid_step;
    const bool last = tau >= config.grid_end;
    if (last) tau = config.grid_end;
    result.curve.push_back(gain_at(pairs, tau, config));
    if (last) break;
  }
  if (result.curve.size() < 2) {
    throw Error(errc::config_error, "sweep: grid needs at least 2 points");
  }

  bool any_feasible = false;
  for (const auto& point : result.curve) {
    if (point.gain.has_value() &&
        (!result.gain_unconstrained || *point.gain > *result.gain_unconstrained)) {
      result.gain_unconstrained = *point.gain;
      result.tau_star_unconstrained = point.tau;
    }
    if (point.feasible &&
        (!any_feasible || *point.gain > result.gain_at_star)) {
      any_feasible = true;
      result.gain_at_star = *point.gain;
      result.tau_star = point.tau;
    }
  }
  if (!any_feasible) {
    throw Error(errc::no_feasible_threshold,
                "sweep: no grid point satisfies the correction-rate cap with a "
                "nonempty selection");
  }
  return result;
}

CollectResult collect_pairs(std::span<const CollectItem> items,
                            Rewriter& corrector, Embedder& embedder,
                            const ExampleLibrary& lib, int max_in_flight) {
  if (items.empty()) throw Error(errc::empty_set, "collect_pairs: no items");
  {
    std::unordered_set<std::string> ids;
    for (const auto& it : items) {
      if (!ids.insert(it.id).second) {
        throw Error(errc::duplicate_id,
                    "collect_pairs: duplicate id '" + it.id + "'");
      }
    }
  }

  struct Slot {
    bool ok = false;
    ScorePair pair;
    CollectFailure failure;
  };
  std::vector<Slot> slots(items.size());

  auto process = [&](std::size_t idx) {
    const auto& item = items[idx];
    Slot& slot = slots[idx];
    std::string stage = "score_original";
    try {
      const double s_llm = score_text(item.original_text, lib, embedder).value;
      stage = "rewrite";
      const std::string corrected = corrector.rewrite(item.original_text);
      stage = "score_corrected";
      const double s_corrected = score_text(corrected, lib, embedder).value;
      slot.pair = {item.id, s_llm, s_corrected};
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.failure = {item.id, stage, e.what()};
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(std::max(1, max_in_flight), items.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < items.size();
             i = next.fetch_add(1)) {
          process(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  CollectResult result;
  for (auto& slot : slots) {
    if (slot.ok) {
      result.pairs.push_back(std::move(slot.pair));
    } else {
      result.failures.push_back(std::move(slot.failure));
    }
  }
  if (result.pairs.empty()) {
    throw Error(errc::all_items_failed, "collect_pairs: every item failed");
  }
  return result;
}

json calibration_result_to_json(const CalibrationResult& result) {
  json curve = json::array();
  for (const auto& point : result.curve) {
    curve.push_back({{"tau", point.tau},
                     {"gain", point.gain ? json(*point.gain) : json()},
                     {"correction_rate", point.correction_rate},
                     {"n_corrected", point.n_corrected},
                     {"feasible", point.feasible}});
  }
  json unconstrained;
  if (result.tau_star_unconstrained) {
    unconstrained = {{"tau_star", *result.tau_star_unconstrained},
                     {"gain", *result.gain_unconstrained}};
  }
  return {{"kind", to_string(result.kind)},
          {"tau_star", result.tau_star},
          {"gain_at_star", result.gain_at_star},
          {"config",
           {{"grid_start", result.config.grid_start},
            {"grid_end", result.config.grid_end},
            {"grid_step", result.config.grid_step},
            {"max_correction_rate", result.config.max_correction_rate},
            {"tie_break", "smallest_tau"}}},
          {"unconstrained", unconstrained},
          {"curve", curve}};
}

std::string curve_to_csv(const CalibrationResult& result) {
  std::string out = "tau,gain,correction_rate,feasible\n";
  for (const auto& point : result.curve) {
    out += shortest(point.tau);
    out += ',';
    if (point.gain) out += shortest(*point.gain);
    out += ',';
    out += shortest(point.correction_rate);
    out += ',';
    out += point.feasible ? "true" : "false";
    out += '\n';
  }
  return out;
}

std::vector<ScorePair> read_score_pairs_jsonl(const std::filesystem::path& path) {
  std::vector<ScorePair> pairs;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& j) {
    ScorePair p;
    p.id = j.at("id").get<std::string>();
    p.s_llm = j.at("s_llm").get<double>();
    p.s_corrected = j.at("s_corrected").get<double>();
    if (!(p.s_llm >= 0.0 && p.s_llm <= 1.0) ||
        !(p.s_corrected >= 0.0 && p.s_corrected <= 1.0)) {
      throw malformed_line_error(path, line_no, "scores must be in [0, 1]");
    }
    pairs.push_back(std::move(p));
  });
  return pairs;
}

std::vector<CollectItem> read_collect_items_jsonl(const std::filesystem::path& path) {
  std::vector<CollectItem> items;
  for_each_jsonl_line(path, [&](std::size_t, const json& j) {
    items.push_back({j.at("id").get<std::string>(),
                     j.at("original_text").get<std::string>()});
  });
  return items;
}

}  // namespace safegate

#include "safegate/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "safegate/jsonl.hpp"

namespace safegate {

namespace {

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

}  // namespace

ScoreStats stats(std::span<const double> values) {
  if (values.empty()) throw Error(errc::empty_set, "stats: no values");
  ScoreStats s;
  s.n = values.size();
  double sum = 0.0;
  s.min = values.front();
  s.max = values.front();
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(errc::non_finite, "stats: non-finite value");
    }
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(s.n);
  double sq = 0.0;
  for (double v : values) {
    const double d = v - s.mean;
    sq += d * d;
  }
  s.sd = std::sqrt(sq / static_cast<double>(s.n));
  return s;
}

ComparisonRow compare(const std::string& label, std::span<const double> before,
                      std::span<const double> after) {
  ComparisonRow row;
  row.label = label;
  row.before = stats(before);
  row.after = stats(after);
  row.mean_reduction_abs = row.before.mean - row.after.mean;
  if (row.before.mean > 0.0) {
    row.mean_reduction_pct = 100.0 * (row.mean_reduction_abs / row.before.mean);
  }
  return row;
}

DriftReport semantic_drift(std::span<const SentencePair> pairs,
                           Rewriter& detoxifier, ParaphraseJudge& judge) {
  if (pairs.empty()) throw Error(errc::empty_set, "semantic_drift: no pairs");
  DriftReport report;
  std::size_t original_hits = 0;
  std::size_t detox_hits = 0;
  std::size_t included = 0;
  for (const auto& pair : pairs) {
    try {
      const bool original_verdict = judge.equivalent(pair.sentence1, pair.sentence2);
      // detoxification operates per sentence, then the pair is re-judged
      const std::string d1 = detoxifier.rewrite(pair.sentence1);
      const std::string d2 = detoxifier.rewrite(pair.sentence2);
      const bool detox_verdict = judge.equivalent(d1, d2);
      ++included;
      if (original_verdict == pair.equivalent) ++original_hits;
      if (detox_verdict == pair.equivalent) ++detox_hits;
    } catch (const std::exception&) {
      report.excluded_ids.push_back(pair.id);
    }
  }
  if (included == 0) {
    throw Error(errc::all_items_failed, "semantic_drift: every pair failed");
  }
  report.n_pairs = included;
  report.acc_original =
      static_cast<double>(original_hits) / static_cast<double>(included);
  report.acc_detoxified =
      static_cast<double>(detox_hits) / static_cast<double>(included);
  report.delta = report.acc_original - report.acc_detoxified;
  return report;
}

std::string render_report(std::span<const ComparisonRow> rows,
                          const DriftReport* drift, ReportFormat format) {
  if (rows.empty()) throw Error(errc::empty_set, "render_report: no rows");
  std::string out;
  const auto pct = [](const ComparisonRow& row) {
    return row.mean_reduction_pct ? fixed6(*row.mean_reduction_pct)
                                  : std::string("n/a");
  };
  if (format == ReportFormat::Markdown) {
    out +=
        "| Label | Before Mean | Before SD | Before Min | Before Max "
        "| After Mean | After SD | After Min | After Max "
        "| Reduction | Reduction % |\n";
    out += "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& row : rows) {
      out += "| " + row.label + " | " + fixed6(row.before.mean) + " | " +
             fixed6(row.before.sd) + " | " + fixed6(row.before.min) + " | " +
             fixed6(row.before.max) + " | " + fixed6(row.after.mean) + " | " +
             fixed6(row.after.sd) + " | " + fixed6(row.after.min) + " | " +
             fixed6(row.after.max) + " | " + fixed6(row.mean_reduction_abs) +
             " | " + pct(row) + " |\n";
    }
    if (drift != nullptr) {
      out += "\n| Pairs | Original Accuracy | Detoxified Accuracy | Delta |\n";
      out += "|---:|---:|---:|---:|\n";
      out += "| " + std::to_string(drift->n_pairs) + " | " +
             fixed6(drift->acc_original) + " | " +
             fixed6(drift->acc_detoxified) + " | " + fixed6(drift->delta) +
             " |\n";
    }
  } else {
    out +=
        "label,before_mean,before_sd,before_min,before_max,"
        "after_mean,after_sd,after_min,after_max,reduction_abs,reduction_pct\n";
    for (const auto& row : rows) {
      out += row.label + "," + fixed6(row.before.mean) + "," +
             fixed6(row.before.sd) + "," + fixed6(row.before.min) + "," +
             fixed6(row.before.max) + "," + fixed6(row.after.mean) + "," +
             fixed6(row.after.sd) + "," + fixed6(row.after.min) + "," +
             fixed6(row.after.max) + "," + fixed6(row.mean_reduction_abs) +
             "," + pct(row) + "\n";
    }
    if (drift != nullptr) {
      out += "# drift\n";
      out += "n_pairs,acc_original,acc_detoxified,delta\n";
      out += std::to_string(drift->n_pairs) + "," +
             fixed6(drift->acc_original) + "," + fixed6(drift->acc_detoxified) +
             "," + fixed6(drift->delta) + "\n";
    }
  }
  return out;
}

json drift_report_to_json(const DriftReport& drift) {
  return {{"n_pairs", drift.n_pairs},
          {"acc_original", drift.acc_original},
          {"acc_detoxified", drift.acc_detoxified},
          {"delta", drift.delta},
          {"excluded_ids", drift.excluded_ids}};
}

std::vector<double> read_scores_jsonl(const std::filesystem::path& path) {
  std::vector<double> values;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& j) {
    j.at("id").get<std::string>();
    const double score = j.at("score").get<double>();
    if (!(score >= 0.0 && score <= 1.0)) {
      throw malformed_line_error(path, line_no, "score must be in [0, 1]");
    }
    values.push_back(score);
  });
  if (values.empty()) {
    throw Error(errc::empty_set, path.string() + ": no scores");
  }
  return values;
}

}  // namespace safegate

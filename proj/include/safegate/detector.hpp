#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "safegate/handles.hpp"
#include "safegate/vectorspace.hpp"

namespace safegate {

enum class SignalKind { Toxicity, Jailbreak };

std::string to_string(SignalKind kind);
SignalKind signal_kind_from_string(const std::string& s);

struct TextRecord {
  std::string id;
  std::string text;
};

struct LibraryEntry {
  std::string id;
  std::string text;
  Embedding embedding;  // unit norm
};

/// Reference set of known-harmful texts for one signal. Immutable after load;
/// safe to share across concurrent scorers.
struct ExampleLibrary {
  SignalKind kind = SignalKind::Toxicity;
  std::vector<LibraryEntry> entries;
  Eigen::Index dim = 0;
  std::string source_meta;
};

struct DetectionScore {
  SignalKind kind;
  double value;  // in [0, 1]
  std::string best_match_id;
};

/// Highest cosine similarity between e and any library entry, negatives
/// clamped to 0. Ties resolve to the lowest-index entry.
DetectionScore score_embedding(const Embedding& e, const ExampleLibrary& lib);

/// Trims, embeds, normalizes, then scores. Empty-after-trim text is an error.
DetectionScore score_text(const std::string& text, const ExampleLibrary& lib,
                          Embedder& embedder);

ExampleLibrary build_library(const std::vector<TextRecord>& texts,
                             SignalKind kind, Embedder& embedder,
                             std::string source_meta = {});

// JSONL persistence: header line {"kind","dim","source_meta"} followed by one
// {"id","text","embedding"} object per line, full-precision floats.
void save_library(const ExampleLibrary& lib, const std::filesystem::path& path);
ExampleLibrary load_library(const std::filesystem::path& path);

}  // namespace safegate

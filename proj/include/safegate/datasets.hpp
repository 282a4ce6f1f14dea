#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace safegate {

// Transcript convention: turns open with the literal markers "\n\nHuman:" and
// "\n\nAssistant:". A bare "Assistant:" inside a turn body is not a marker.

/// Body of the final assistant turn, up to the next Human marker or end of
/// transcript, whitespace-trimmed.
std::string extract_last_assistant(const std::string& transcript);

struct ResponsePair {
  std::string id;
  std::string rejected;  // toxic
  std::string chosen;    // non-toxic
  // Identical chosen/rejected bodies carry no training signal; they are kept
  // but flagged so downstream consumers can filter without skewing counts.
  bool degenerate = false;
};

ResponsePair build_pair(const std::string& id,
                        const std::string& chosen_transcript,
                        const std::string& rejected_transcript);

// JSONL: {"id","rejected","chosen","degenerate"}. Round-trips text fields
// byte for byte.
void write_pairs(std::span<const ResponsePair> pairs,
                 const std::filesystem::path& path);
std::vector<ResponsePair> read_pairs(const std::filesystem::path& path);

struct SentencePair {
  std::string id;
  std::string sentence1;
  std::string sentence2;
  bool equivalent = false;
};

// JSONL: {"id","sentence1","sentence2","label"} with label 1 = equivalent.
void write_sentence_pairs(std::span<const SentencePair> pairs,
                          const std::filesystem::path& path);
std::vector<SentencePair> read_sentence_pairs(const std::filesystem::path& path);

}  // namespace safegate

#include "safegate/datasets.hpp"

#include <unordered_set>

#include "safegate/jsonl.hpp"
#include "safegate/textutil.hpp"

namespace safegate {

namespace {
constexpr std::string_view kAssistantMarker = "\n\nAssistant:";
constexpr std::string_view kHumanMarker = "\n\nHuman:";
}  // namespace

std::string extract_last_assistant(const std::string& transcript) {
  const std::size_t pos = transcript.rfind(kAssistantMarker);
  if (pos == std::string::npos) {
    throw Error(errc::no_assistant_marker,
                "extract_last_assistant: no assistant marker in transcript");
  }
  const std::size_t body_begin = pos + kAssistantMarker.size();
  const std::size_t next_human = transcript.find(kHumanMarker, body_begin);
  const std::string body = trimmed(
      transcript.substr(body_begin, next_human == std::string::npos
                                        ? std::string::npos
                                        : next_human - body_begin));
  if (body.empty()) {
    throw Error(errc::empty_extraction,
                "extract_last_assistant: final assistant turn is empty");
  }
  return body;
}

ResponsePair build_pair(const std::string& id,
                        const std::string& chosen_transcript,
                        const std::string& rejected_transcript) {
  ResponsePair pair;
  pair.id = id;
  try {
    pair.chosen = extract_last_assistant(chosen_transcript);
  } catch (const Error& e) {
    throw Error(e.code(), "chosen transcript ('" + id + "'): " + e.what());
  }
  try {
    pair.rejected = extract_last_assistant(rejected_transcript);
  } catch (const Error& e) {
    throw Error(e.code(), "rejected transcript ('" + id + "'): " + e.what());
  }
  pair.degenerate = pair.chosen == pair.rejected;
  return pair;
}

void write_pairs(std::span<const ResponsePair> pairs,
                 const std::filesystem::path& path) {
  auto out = open_for_write(path);
  for (const auto& p : pairs) {
    json line = {{"id", p.id},
                 {"rejected", p.rejected},
                 {"chosen", p.chosen},
                 {"degenerate", p.degenerate}};
    out << line.dump() << '\n';
  }
  if (!out) throw Error(errc::io_error, "write failed: " + path.string());
}

std::vector<ResponsePair> read_pairs(const std::filesystem::path& path) {
  std::vector<ResponsePair> pairs;
  std::unordered_set<std::string> ids;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& j) {
    ResponsePair p;
    p.id = j.at("id").get<std::string>();
    p.rejected = j.at("rejected").get<std::string>();
    p.chosen = j.at("chosen").get<std::string>();
    p.degenerate = j.value("degenerate", false);
    if (trimmed(p.rejected).empty() || trimmed(p.chosen).empty()) {
      throw malformed_line_error(path, line_no, "empty response text");
    }
    if (!ids.insert(p.id).second) {
      throw Error(errc::duplicate_id,
                  path.string() + ": duplicate id '" + p.id + "'");
    }
    pairs.push_back(std::move(p));
  });
  return pairs;
}

void write_sentence_pairs(std::span<const SentencePair> pairs,
                          const std::filesystem::path& path) {
  auto out = open_for_write(path);
  for (const auto& p : pairs) {
    json line = {{"id", p.id},
                 {"sentence1", p.sentence1},
                 {"sentence2", p.sentence2},
                 {"label", p.equivalent ? 1 : 0}};
    out << line.dump() << '\n';
  }
  if (!out) throw Error(errc::io_error, "write failed: " + path.string());
}

std::vector<SentencePair> read_sentence_pairs(const std::filesystem::path& path) {
  std::vector<SentencePair> pairs;
  std::unordered_set<std::string> ids;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& j) {
    SentencePair p;
    p.id = j.at("id").get<std::string>();
    p.sentence1 = j.at("sentence1").get<std::string>();
    p.sentence2 = j.at("sentence2").get<std::string>();
    const int label = j.at("label").get<int>();
    if (label != 0 && label != 1) {
      throw malformed_line_error(path, line_no, "label must be 0 or 1");
    }
    if (p.sentence1.empty() || p.sentence2.empty()) {
      throw malformed_line_error(path, line_no, "empty sentence");
    }
    p.equivalent = label == 1;
    if (!ids.insert(p.id).second) {
      throw Error(errc::duplicate_id,
                  path.string() + ": duplicate id '" + p.id + "'");
    }
    pairs.push_back(std::move(p));
  });
  return pairs;
}

}  // namespace safegate

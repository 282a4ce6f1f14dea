#include "safegate/detector.hpp"

#include <unordered_set>

#include "safegate/jsonl.hpp"
#include "safegate/textutil.hpp"

namespace safegate {

std::string to_string(SignalKind kind) {
  return kind == SignalKind::Toxicity ? "toxicity" : "jailbreak";
}

SignalKind signal_kind_from_string(const std::string& s) {
  if (s == "toxicity") return SignalKind::Toxicity;
  if (s == "jailbreak") return SignalKind::Jailbreak;
  throw Error(errc::bad_request, "unknown signal kind '" + s + "'");
}

DetectionScore score_embedding(const Embedding& e, const ExampleLibrary& lib) {
  if (lib.entries.empty()) {
    throw Error(errc::empty_library, "score_embedding: library is empty");
  }
  if (e.size() != lib.dim) {
    throw Error(errc::dimension_mismatch,
                "score_embedding: embedding dim " + std::to_string(e.size()) +
                    " vs library dim " + std::to_string(lib.dim));
  }
  if (e.norm() == 0.0) {
    throw Error(errc::zero_norm, "score_embedding: zero-norm embedding");
  }
  double best = -1.0;
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < lib.entries.size(); ++i) {
    const double c =
        std::max(0.0, cosine_similarity(e, lib.entries[i].embedding));
    if (c > best) {
      best = c;
      best_idx = i;
    }
  }
  return {lib.kind, best, lib.entries[best_idx].id};
}

DetectionScore score_text(const std::string& text, const ExampleLibrary& lib,
                          Embedder& embedder) {
  const std::string t = trimmed(text);
  if (t.empty()) throw Error(errc::empty_text, "score_text: empty text");
  Embedding e = embedder.embed(t);
  if (e.size() != lib.dim) {
    throw Error(errc::dimension_mismatch,
                "score_text: backend returned dim " + std::to_string(e.size()) +
                    ", library dim " + std::to_string(lib.dim));
  }
  return score_embedding(normalize(e), lib);
}

ExampleLibrary build_library(const std::vector<TextRecord>& texts,
                             SignalKind kind, Embedder& embedder,
                             std::string source_meta) {
  if (texts.empty()) throw Error(errc::empty_set, "build_library: no texts");
  std::unordered_set<std::string> seen;
  ExampleLibrary lib;
  lib.kind = kind;
  lib.source_meta = std::move(source_meta);
  lib.entries.reserve(texts.size());
  for (const auto& rec : texts) {
    if (!seen.insert(rec.id).second) {
      throw Error(errc::duplicate_id, "build_library: duplicate id '" + rec.id + "'");
    }
    const std::string t = trimmed(rec.text);
    if (t.empty()) {
      throw Error(errc::empty_text, "build_library: empty text for id '" + rec.id + "'");
    }
    Embedding e = embedder.embed(t);
    if (lib.entries.empty()) {
      lib.dim = e.size();
    } else if (e.size() != lib.dim) {
      throw Error(errc::dimension_mismatch,
                  "build_library: inconsistent embedding dims");
    }
    lib.entries.push_back({rec.id, rec.text, normalize(e)});
  }
  return lib;
}

void save_library(const ExampleLibrary& lib, const std::filesystem::path& path) {
  if (lib.entries.empty()) {
    throw Error(errc::empty_library, "save_library: library is empty");
  }
  auto out = open_for_write(path);
  json header = {{"kind", to_string(lib.kind)},
                 {"dim", lib.dim},
                 {"source_meta", lib.source_meta}};
  out << header.dump() << '\n';
  for (const auto& entry : lib.entries) {
    std::vector<double> comps(entry.embedding.data(),
                              entry.embedding.data() + entry.embedding.size());
    json line = {{"id", entry.id}, {"text", entry.text}, {"embedding", comps}};
    out << line.dump() << '\n';
  }
  if (!out) throw Error(errc::io_error, "write failed: " + path.string());
}

ExampleLibrary load_library(const std::filesystem::path& path) {
  ExampleLibrary lib;
  bool have_header = false;
  std::unordered_set<std::string> seen;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& j) {
    if (!have_header) {
      lib.kind = signal_kind_from_string(j.at("kind").get<std::string>());
      lib.dim = j.at("dim").get<Eigen::Index>();
      lib.source_meta = j.value("source_meta", std::string{});
      if (lib.dim < 1) {
        throw malformed_line_error(path, line_no, "dim must be >= 1");
      }
      have_header = true;
      return;
    }
    LibraryEntry entry;
    entry.id = j.at("id").get<std::string>();
    entry.text = j.at("text").get<std::string>();
    const auto comps = j.at("embedding").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(comps.size()) != lib.dim) {
      throw malformed_line_error(path, line_no, "embedding dim mismatch");
    }
    entry.embedding = Eigen::Map<const Embedding>(comps.data(),
                                                  static_cast<Eigen::Index>(comps.size()));
    if (!entry.embedding.allFinite()) {
      throw malformed_line_error(path, line_no, "non-finite embedding component");
    }
    if (std::abs(entry.embedding.norm() - 1.0) > 1e-9) {
      throw malformed_line_error(path, line_no, "embedding is not unit norm");
    }
    if (!seen.insert(entry.id).second) {
      throw Error(errc::duplicate_id,
                  path.string() + ": duplicate id '" + entry.id + "'");
    }
    lib.entries.push_back(std::move(entry));
  });
  if (!have_header) {
    throw Error(errc::malformed_line, path.string() + ": missing header line");
  }
  if (lib.entries.empty()) {
    throw Error(errc::empty_library, path.string() + ": no entries");
  }
  return lib;
}

}  // namespace safegate

#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "safegate/error.hpp"

namespace safegate {

using json = nlohmann::json;

/// Walks a JSONL file, calling fn(line_no, parsed) for every non-blank line.
/// Bad JSON, and json accessor errors thrown from fn, surface as
/// malformed_line tagged with the 1-based line number.
inline void for_each_jsonl_line(
    const std::filesystem::path& path,
    const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io_error, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(line_no, json::parse(line));
    } catch (const Error&) {
      throw;
    } catch (const json::exception& e) {
      throw Error(errc::malformed_line, path.string() + ": line " +
                                            std::to_string(line_no) + ": " +
                                            e.what());
    }
  }
}

inline Error malformed_line_error(const std::filesystem::path& path,
                                  std::size_t line_no,
                                  const std::string& what) {
  return Error(errc::malformed_line, path.string() + ": line " +
                                         std::to_string(line_no) + ": " + what);
}

inline std::ofstream open_for_write(const std::filesystem::path& path,
                                    std::ios_base::openmode mode = std::ios_base::out) {
  std::ofstream out(path, mode);
  if (!out) throw Error(errc::io_error, "cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace safegate

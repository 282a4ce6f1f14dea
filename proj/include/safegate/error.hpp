#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace safegate {

/// Exception carrying a stable machine-readable code alongside the message.
/// Codes surface verbatim in CLI diagnostics and HTTP error payloads.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

namespace errc {
// vector math
inline constexpr const char* dimension_mismatch = "dimension_mismatch";
inline constexpr const char* zero_norm = "zero_norm";
inline constexpr const char* empty_set = "empty_set";
inline constexpr const char* too_few = "too_few";
inline constexpr const char* non_finite = "non_finite";
inline constexpr const char* not_symmetric = "not_symmetric";
inline constexpr const char* k_out_of_range = "k_out_of_range";
inline constexpr const char* no_convergence = "no_convergence";
// detector
inline constexpr const char* empty_library = "empty_library";
inline constexpr const char* empty_text = "empty_text";
inline constexpr const char* duplicate_id = "duplicate_id";
// calibration
inline constexpr const char* no_feasible_threshold = "no_feasible_threshold";
inline constexpr const char* all_items_failed = "all_items_failed";
// subspace projection
inline constexpr const char* too_few_pairs = "too_few_pairs";
inline constexpr const char* degenerate_data = "degenerate_data";
inline constexpr const char* empty_pool = "empty_pool";
// datasets
inline constexpr const char* no_assistant_marker = "no_assistant_marker";
inline constexpr const char* empty_extraction = "empty_extraction";
inline constexpr const char* malformed_line = "malformed_line";
// io / config
inline constexpr const char* io_error = "io_error";
inline constexpr const char* config_error = "config_error";
inline constexpr const char* bad_request = "bad_request";
}  // namespace errc

}  // namespace safegate

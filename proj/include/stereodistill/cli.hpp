#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stereodistill/config.hpp"

namespace stereodistill {

/// Exit codes shared by every subcommand.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;     // anything not classified below
inline constexpr int config = 2;      // bad flags, config values, parse errors
inline constexpr int capability = 3;  // teacher capability, shape or data-domain mismatch
inline constexpr int io = 4;          // missing or unwritable files
}  // namespace exit_code

struct CommandResult {
  int exit_code = exit_code::ok;
  std::vector<std::string> artifacts;  // top-level files written; empty on failure
};

/// One row of the loss/point ablation: cumulative points, their losses and
/// whether the attention-weighted cost volume is on.
struct AblationRow {
  int index = 0;
  std::vector<Term> points;
  std::map<Term, LossKind> losses;
  bool attention = false;
};
const std::vector<AblationRow>& ablation_rows();

/// Runs "stereodistill <args...>" (args excludes the program name).
CommandResult run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stereodistill

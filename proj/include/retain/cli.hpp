// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace retain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // integrity or numerical failure, I/O
inline constexpr int kExitUsage = 2;

/// Runs one subcommand (generate, train, eval, interpret, gradcheck).
/// `args` excludes the program name. Data goes to `out` only for `--out -`;
/// diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace retain::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace s2s::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_runtime = 2;

/// Runs one command line (argv without the program name). Data goes to
/// `out`, logs and diagnostics to `err`; `in` feeds the chat REPL.
int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

} // namespace s2s::cli

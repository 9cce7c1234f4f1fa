#pragma once

#include <iosfwd>

namespace distillrag::cli {

/// Runs one subcommand. Returns 0 on success, 2 on usage errors and 1 on
/// runtime failures (with a JSON error object on `err`).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace distillrag::cli

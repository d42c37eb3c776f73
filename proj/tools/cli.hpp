#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fable::cli {

/// Runs one CLI invocation; `args` excludes the program name. Failures are
/// reported as a single JSON line on `err` and a nonzero return value.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fable::cli

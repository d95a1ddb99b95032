#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spur::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInvalid = 2;

/// Parses and runs one `spur` invocation. Normal output goes to `out`,
/// diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spur::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace riskid::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kDiverged = 3 };

// Default output directory when --out is not given.
inline constexpr const char* kOutEnv = "RISKID_OUT_DIR";

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace riskid::cli

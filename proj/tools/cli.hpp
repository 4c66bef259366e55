#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tgnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

inline constexpr std::uint64_t kDefaultSeed = 1337;

// args[0] is the program name. Settings resolve as
// defaults < TGNET_SEED < --config file < command-line flags.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tgnet::cli

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Relative output directories are placed under this variable when it is set.
inline constexpr const char* kOutputRootEnv = "PIT_OUTPUT_ROOT";

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::filesystem::path resolve_output_dir(const std::filesystem::path& dir);

}  // namespace pit::cli

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace clsa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;        // bad arguments or unreadable input
inline constexpr int kExitConsistency = 3;  // artifacts that do not fit together

// Build version from `git describe`, or "unknown".
std::string version();

// Appends `entry` (stamped with the version) to dir/manifest.json.
void append_manifest(const std::filesystem::path& dir, nlohmann::json entry);

// Entry point for the `clsa` executable; returns the process exit code.
int run(int argc, char** argv);

}  // namespace clsa::cli

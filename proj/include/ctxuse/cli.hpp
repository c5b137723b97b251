#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ctxuse/model.hpp"

namespace ctxuse::cli {

inline constexpr std::string_view kToolName = "ctxuse";
inline constexpr std::string_view kVersion = "0.1.0";

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// First 16 hex digits of SHA-256 over the compact config without "out".
std::string config_hash(const Json& config);

/// Metadata block written at the top of every output file.
Json output_header(const Json& config, std::string_view command);

/// Records of a JSON Lines file, skipping blank and header lines.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

/// Entry point shared by the executable and the tests. Prints a JSON summary
/// of the run on `out`; on failure prints {"error", "message", "sample_id"}
/// on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctxuse::cli

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "ctxuse/model.hpp"

namespace ctxuse {

enum class ReplayMode { Record, Replay, Passthrough };

std::string_view to_string(ReplayMode mode);
ReplayMode parse_replay_mode(std::string_view text);

/// Append-only JSON Lines store of keyed records. Every line carries a
/// "record_hash" over the rest of the record; loading fails with
/// StoreCorruption on a truncated line or a hash mismatch.
class ReplayStore {
public:
    /// Opens `path`. With `writable` the file is created if missing and new
    /// records are appended to it; otherwise it must exist.
    ReplayStore(std::filesystem::path path, bool writable);

    std::optional<Json> find(const std::string& key) const;
    /// Adds "key" and "record_hash" to `record` and appends it. A key that is
    /// already present is left untouched.
    void append(const std::string& key, Json record);

    std::size_t size() const;
    const std::filesystem::path& path() const { return path_; }

    static std::string record_hash(const Json& record_without_hash);

private:
    std::filesystem::path path_;
    bool writable_;
    std::map<std::string, Json> records_;
    std::ofstream out_;
    mutable std::mutex mutex_;
};

/// UTC wall-clock time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace ctxuse

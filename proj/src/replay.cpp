#include "ctxuse/replay.hpp"

#include <ctime>

#include "ctxuse/hash.hpp"

namespace ctxuse {

std::string_view to_string(ReplayMode mode) {
    switch (mode) {
        case ReplayMode::Record: return "record";
        case ReplayMode::Replay: return "replay";
        case ReplayMode::Passthrough: return "passthrough";
    }
    return "passthrough";
}

ReplayMode parse_replay_mode(std::string_view text) {
    if (text == "record") return ReplayMode::Record;
    if (text == "replay") return ReplayMode::Replay;
    if (text == "passthrough") return ReplayMode::Passthrough;
    throw ConfigError("unknown replay mode '" + std::string(text) + "'");
}

std::string ReplayStore::record_hash(const Json& record_without_hash) {
    return sha256_hex(encode_line(record_without_hash));
}

ReplayStore::ReplayStore(std::filesystem::path path, bool writable)
    : path_(std::move(path)), writable_(writable) {
    std::ifstream in(path_, std::ios::binary);
    if (!in && !writable_) throw ConfigError("replay store " + path_.string() + " does not exist");
    if (in) {
        std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (!contents.empty() && contents.back() != '\n') {
            throw StoreCorruption(path_.string() + ": last record is truncated");
        }
        std::size_t line_no = 0, pos = 0;
        while (pos < contents.size()) {
            const auto nl = contents.find('\n', pos);
            const std::string line = contents.substr(pos, nl - pos);
            pos = nl + 1;
            ++line_no;
            if (line.empty()) continue;
            Json j;
            try {
                j = Json::parse(line);
            } catch (const Json::parse_error&) {
                throw StoreCorruption(path_.string() + ": line " + std::to_string(line_no) + " is not valid JSON");
            }
            if (!j.is_object() || !j.contains("key") || !j.contains("record_hash")) {
                throw StoreCorruption(path_.string() + ": line " + std::to_string(line_no) + " lacks key/hash");
            }
            const std::string stored = j["record_hash"].get<std::string>();
            j.erase("record_hash");
            if (record_hash(j) != stored) {
                throw StoreCorruption(path_.string() + ": hash mismatch on line " + std::to_string(line_no));
            }
            records_.emplace(j["key"].get<std::string>(), std::move(j));
        }
    }
    if (writable_) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        out_.open(path_, std::ios::app | std::ios::binary);
        if (!out_) throw ConfigError("cannot write replay store " + path_.string());
    }
}

std::optional<Json> ReplayStore::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

void ReplayStore::append(const std::string& key, Json record) {
    if (!writable_) throw ConfigError("replay store " + path_.string() + " is read-only");
    std::lock_guard lock(mutex_);
    if (records_.count(key)) return;
    Json full = Json::object();
    full["key"] = key;
    for (auto& [k, v] : record.items()) {
        if (k != "key" && k != "record_hash") full[k] = v;
    }
    const auto hash = record_hash(full);
    Json line = full;
    line["record_hash"] = hash;
    out_ << encode_line(line) << '\n';
    out_.flush();
    records_.emplace(key, std::move(full));
}

std::size_t ReplayStore::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace ctxuse

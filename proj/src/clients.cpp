#include "ctxuse/clients.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "ctxuse/characteristics.hpp"
#include "ctxuse/hash.hpp"
#include "ctxuse/text.hpp"
#include "ctxuse/url.hpp"

namespace ctxuse {

void RetryPolicy::pause(std::chrono::milliseconds d) const {
    if (sleep) {
        sleep(d);
    } else {
        std::this_thread::sleep_for(d);
    }
}

bool retryable_status(int status) { return status == 0 || status == 429 || status >= 500; }

namespace {

httplib::Client make_client(const UrlParts& parts, std::chrono::milliseconds timeout) {
    httplib::Client cli(origin(parts));
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    cli.set_follow_location(true);
    return cli;
}

HttpReply to_reply(const httplib::Result& res) {
    HttpReply r;
    if (!res) {
        r.error = httplib::to_string(res.error());
        return r;
    }
    r.status = res->status;
    r.body = res->body;
    return r;
}

}  // namespace

HttpReply http_post_json(const HttpEndpoint& endpoint, const Json& body) {
    const auto parts = parse_url(endpoint.url);
    auto cli = make_client(parts, endpoint.timeout);
    httplib::Headers headers;
    if (!endpoint.api_key_env.empty()) {
        const char* key = std::getenv(endpoint.api_key_env.c_str());
        if (!key || !*key) throw ConfigError("environment variable " + endpoint.api_key_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    return to_reply(cli.Post(parts.path, headers, body.dump(), "application/json"));
}

HttpReply http_get(const std::string& url, std::chrono::milliseconds timeout) {
    const auto parts = parse_url(url);
    auto cli = make_client(parts, timeout);
    return to_reply(cli.Get(parts.path));
}

}  // namespace ctxuse

namespace ctxuse::retrieval {

namespace {

template <typename E>
Json expect_json(const HttpReply& reply, const std::string& what) {
    if (reply.status == 0) throw E(what + ": " + reply.error, true);
    if (reply.status < 200 || reply.status >= 300) {
        throw E(what + ": HTTP " + std::to_string(reply.status), retryable_status(reply.status));
    }
    try {
        return Json::parse(reply.body);
    } catch (const Json::parse_error& e) {
        throw E(what + ": invalid JSON response: " + e.what(), false);
    }
}

std::optional<Date> optional_date(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return parse_date(it->get<std::string>());
}

}  // namespace

FixtureSearchClient::FixtureSearchClient(const std::filesystem::path& dir, std::string engine, double min_overlap)
    : engine_(std::move(engine)), min_overlap_(min_overlap) {
    std::ifstream manifest(dir / "manifest.json");
    if (!manifest) throw ConfigError("fixture corpus " + dir.string() + " has no manifest.json");
    Json entries;
    try {
        entries = Json::parse(manifest);
    } catch (const Json::parse_error& e) {
        throw ConfigError("fixture manifest: " + std::string(e.what()));
    }
    for (const auto& entry : entries) {
        std::ifstream page(dir / entry.at("file").get<std::string>(), std::ios::binary);
        if (!page) throw ConfigError("fixture page " + entry.at("file").get<std::string>() + " is missing");
        std::string body((std::istreambuf_iterator<char>(page)), std::istreambuf_iterator<char>());
        Page p;
        p.hit.url = entry.at("url").get<std::string>();
        p.hit.title = entry.value("title", "");
        p.hit.pub_date = optional_date(entry, "pub_date");
        p.words = text::word_set(text::looks_like_html(body) ? text::html_to_text(body) : body);
        p.hit.text = std::move(body);
        pages_.push_back(std::move(p));
    }
}

std::vector<SearchHit> FixtureSearchClient::search(const std::string& query, std::size_t top_n) {
    const auto q = text::word_set(query);
    if (q.empty()) return {};
    std::vector<std::pair<double, const Page*>> matches;
    for (const auto& p : pages_) {
        std::size_t shared = 0;
        for (const auto& w : q) shared += p.words.count(w);
        const double overlap = static_cast<double>(shared) / q.size();
        if (overlap >= min_overlap_) matches.emplace_back(overlap, &p);
    }
    std::sort(matches.begin(), matches.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->hit.url < b.second->hit.url;
    });
    std::vector<SearchHit> hits;
    for (std::size_t i = 0; i < matches.size() && i < top_n; ++i) {
        hits.push_back(matches[i].second->hit);
        hits.back().rank = static_cast<int>(i + 1);
    }
    return hits;
}

HttpSearchClient::HttpSearchClient(HttpEndpoint endpoint, std::string engine, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), engine_(std::move(engine)), retry_(std::move(retry)) {}

std::vector<SearchHit> HttpSearchClient::search(const std::string& query, std::size_t top_n) {
    const Json request{{"query", query}, {"top_n", top_n}, {"engine", engine_}};
    const Json response = retry_.run([&] {
        return expect_json<SearchBackendError>(http_post_json(endpoint_, request), "search " + engine_);
    });
    std::vector<SearchHit> hits;
    try {
        int position = 0;
        for (const auto& r : response.at("results")) {
            SearchHit h;
            h.url = r.at("url").get<std::string>();
            h.title = r.value("title", "");
            h.rank = r.value("rank", ++position);
            h.pub_date = optional_date(r, "pub_date");
            if (auto it = r.find("text"); it != r.end() && it->is_string()) h.text = it->get<std::string>();
            hits.push_back(std::move(h));
        }
    } catch (const Json::exception& e) {
        throw SearchBackendError("search " + engine_ + ": unexpected response shape: " + e.what(), false);
    }
    return hits;
}

HttpPageFetcher::HttpPageFetcher(std::chrono::milliseconds timeout, RetryPolicy retry)
    : timeout_(timeout), retry_(std::move(retry)) {}

std::string HttpPageFetcher::fetch(const std::string& url) {
    return retry_.run([&] {
        HttpReply reply;
        try {
            reply = http_get(url, timeout_);
        } catch (const MalformedUrl& e) {
            throw SearchBackendError(e.what(), false);
        }
        if (reply.status == 0) throw SearchBackendError("fetch " + url + ": " + reply.error, true);
        if (reply.status < 200 || reply.status >= 300) {
            throw SearchBackendError("fetch " + url + ": HTTP " + std::to_string(reply.status),
                                     retryable_status(reply.status));
        }
        return reply.body;
    });
}

std::vector<double> LexicalRerankClient::score(const std::string& query, const std::vector<std::string>& documents) {
    std::vector<double> scores;
    scores.reserve(documents.size());
    for (const auto& d : documents) scores.push_back(characteristics::jaccard(query, d).value);
    return scores;
}

HttpRerankClient::HttpRerankClient(HttpEndpoint endpoint, std::string model, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), retry_(std::move(retry)) {}

std::vector<double> HttpRerankClient::score(const std::string& query, const std::vector<std::string>& documents) {
    if (documents.empty()) return {};
    const Json request{{"model", model_}, {"query", query}, {"documents", documents}, {"top_n", documents.size()}};
    const Json response = retry_.run(
        [&] { return expect_json<RerankBackendError>(http_post_json(endpoint_, request), "rerank"); });
    std::vector<std::optional<double>> scores(documents.size());
    try {
        for (const auto& r : response.at("results")) {
            const auto idx = r.at("index").get<std::size_t>();
            if (idx >= scores.size()) throw RerankBackendError("rerank: index out of range", false);
            scores[idx] = r.at("relevance_score").get<double>();
        }
    } catch (const Json::exception& e) {
        throw RerankBackendError(std::string("rerank: unexpected response shape: ") + e.what(), false);
    }
    std::vector<double> out;
    for (const auto& s : scores) {
        if (!s) throw RerankBackendError("rerank: response omitted a document", false);
        out.push_back(*s);
    }
    return out;
}

ReplayRerankClient::ReplayRerankClient(RerankClient* inner, std::shared_ptr<ReplayStore> store, ReplayMode mode,
                                       std::string reranker_id)
    : inner_(inner), store_(std::move(store)), mode_(mode) {
    if (!reranker_id.empty()) {
        id_ = std::move(reranker_id);
    } else if (inner_) {
        id_ = inner_->id();
    } else {
        throw ConfigError("replay reranker needs an id or an inner client");
    }
    if (mode_ != ReplayMode::Replay && !inner_) throw ConfigError("record/passthrough reranker needs a client");
    if (mode_ != ReplayMode::Passthrough && !store_) throw ConfigError("record/replay reranker needs a store");
}

std::vector<double> ReplayRerankClient::score(const std::string& query, const std::vector<std::string>& documents) {
    if (mode_ == ReplayMode::Passthrough) return inner_->score(query, documents);

    auto key_of = [&](const std::string& doc) { return "rerank:" + id_ + ":" + sha256_hex(query + "\n" + doc); };
    std::vector<double> out(documents.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < documents.size(); ++i) {
        if (auto rec = store_->find(key_of(documents[i]))) {
            out[i] = rec->at("score").get<double>();
        } else {
            missing.push_back(i);
        }
    }
    if (missing.empty()) return out;
    if (mode_ == ReplayMode::Replay) {
        throw ReplayMiss("no recorded rerank score for document " + std::to_string(missing.front()));
    }
    std::vector<std::string> batch;
    for (auto i : missing) batch.push_back(documents[i]);
    const auto fresh = inner_->score(query, batch);
    for (std::size_t k = 0; k < missing.size(); ++k) {
        out[missing[k]] = fresh.at(k);
        store_->append(key_of(batch[k]), Json{{"kind", "rerank"},
                                             {"reranker", id_},
                                             {"score", fresh[k]},
                                             {"timestamp", utc_timestamp()}});
    }
    return out;
}

}  // namespace ctxuse::retrieval

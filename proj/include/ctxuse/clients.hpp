#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "ctxuse/replay.hpp"
#include "ctxuse/retrieval.hpp"

namespace ctxuse {

/// Exponential backoff applied to retryable BackendErrors only.
struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for

    template <typename F>
    auto run(F&& call) const -> decltype(call()) {
        auto backoff = initial_backoff;
        for (int attempt = 1;; ++attempt) {
            try {
                return call();
            } catch (const BackendError& e) {
                if (!e.retryable() || attempt >= max_attempts) throw;
            }
            pause(backoff);
            backoff = std::chrono::milliseconds(static_cast<long long>(backoff.count() * multiplier));
        }
    }

private:
    void pause(std::chrono::milliseconds d) const;
};

struct HttpEndpoint {
    std::string url;
    std::string api_key_env;  // name of the environment variable holding a bearer token
    std::chrono::milliseconds timeout{30000};
};

/// Transport-level outcome of one HTTP exchange. Status 0 means the request
/// never got a response.
struct HttpReply {
    int status = 0;
    std::string body;
    std::string error;
};

HttpReply http_post_json(const HttpEndpoint& endpoint, const Json& body);
HttpReply http_get(const std::string& url, std::chrono::milliseconds timeout);

/// 5xx, 429 and transport failures may succeed on retry; other statuses won't.
bool retryable_status(int status);

}  // namespace ctxuse

namespace ctxuse::retrieval {

/// Local corpus: a directory holding manifest.json, a JSON array of
/// {"url", "title", "pub_date", "file"}. A page matches when it contains at
/// least `min_overlap` of the query's distinct words.
class FixtureSearchClient : public SearchClient {
public:
    explicit FixtureSearchClient(const std::filesystem::path& dir, std::string engine = "fixture",
                                 double min_overlap = 0.5);

    std::string engine() const override { return engine_; }
    std::vector<SearchHit> search(const std::string& query, std::size_t top_n) override;

private:
    struct Page {
        SearchHit hit;
        std::set<std::string> words;
    };
    std::string engine_;
    double min_overlap_;
    std::vector<Page> pages_;
};

/// POST {"query", "top_n", "engine"} -> {"results": [{"url", "title", "rank", "pub_date"?, "text"?}]}.
class HttpSearchClient : public SearchClient {
public:
    HttpSearchClient(HttpEndpoint endpoint, std::string engine, RetryPolicy retry = {});

    std::string engine() const override { return engine_; }
    std::vector<SearchHit> search(const std::string& query, std::size_t top_n) override;

private:
    HttpEndpoint endpoint_;
    std::string engine_;
    RetryPolicy retry_;
};

class HttpPageFetcher : public PageFetcher {
public:
    explicit HttpPageFetcher(std::chrono::milliseconds timeout = std::chrono::milliseconds(30000),
                             RetryPolicy retry = {});
    std::string fetch(const std::string& url) override;

private:
    std::chrono::milliseconds timeout_;
    RetryPolicy retry_;
};

/// Deterministic stand-in: Jaccard similarity between query and document.
class LexicalRerankClient : public RerankClient {
public:
    std::string id() const override { return "lexical-jaccard"; }
    std::vector<double> score(const std::string& query, const std::vector<std::string>& documents) override;
};

/// POST {"model", "query", "documents", "top_n"} -> {"results": [{"index", "relevance_score"}]}.
class HttpRerankClient : public RerankClient {
public:
    HttpRerankClient(HttpEndpoint endpoint, std::string model, RetryPolicy retry = {});

    std::string id() const override { return "http:" + model_; }
    std::vector<double> score(const std::string& query, const std::vector<std::string>& documents) override;

private:
    HttpEndpoint endpoint_;
    std::string model_;
    RetryPolicy retry_;
};

/// Records scores of `inner` per (query, document) pair, or serves them back.
class ReplayRerankClient : public RerankClient {
public:
    ReplayRerankClient(RerankClient* inner, std::shared_ptr<ReplayStore> store, ReplayMode mode,
                       std::string reranker_id = {});

    std::string id() const override { return id_; }
    std::vector<double> score(const std::string& query, const std::vector<std::string>& documents) override;

private:
    RerankClient* inner_;
    std::shared_ptr<ReplayStore> store_;
    ReplayMode mode_;
    std::string id_;
};

}  // namespace ctxuse::retrieval

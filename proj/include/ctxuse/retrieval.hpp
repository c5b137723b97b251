#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxuse/model.hpp"

namespace ctxuse::retrieval {

/// One hit as returned by a single engine.
struct SearchHit {
    std::string url;
    std::string title;
    int rank = 0;
    std::optional<Date> pub_date;
    std::optional<std::string> text;  // engines that return page bodies inline
};

class SearchClient {
public:
    virtual ~SearchClient() = default;
    virtual std::string engine() const = 0;
    virtual std::vector<SearchHit> search(const std::string& query, std::size_t top_n) = 0;
};

class PageFetcher {
public:
    virtual ~PageFetcher() = default;
    virtual std::string fetch(const std::string& url) = 0;
};

/// Deduplicated result. Engine ranks are kept for later inspection only;
/// nothing downstream reads them.
struct SearchResult {
    std::string url;
    std::string title;
    std::map<std::string, int> rank_per_engine;
    std::string fetched_text;
    std::optional<Date> pub_date;
};

/// Queries every engine with the claim text and merges hits by URL, keeping
/// first-seen order. Pages without an inline body are fetched via `fetcher`;
/// a page that fails to fetch is dropped.
std::vector<SearchResult> search(const ClaimRecord& claim, std::span<SearchClient* const> engines,
                                 PageFetcher* fetcher = nullptr, std::size_t top_n = 20);

struct Chunk {
    std::string page_url;
    std::size_t ordinal = 0;
    std::string text;
    std::size_t word_count = 0;
    std::optional<double> rerank_score;

    bool operator==(const Chunk&) const = default;
};

inline constexpr std::size_t kMaxChunkWords = 200;
inline constexpr std::size_t kMaxEvidenceWords = 300;

/// Paragraph chunks; markup is stripped first. Paragraphs of `max_words` or
/// more are cut greedily into consecutive runs of at most `max_words` words.
std::vector<Chunk> chunk_page(std::string_view page_text, const std::string& page_url = {},
                              std::size_t max_words = kMaxChunkWords);

/// Drops sentences whose ROUGE-L F against the claim exceeds `threshold`.
/// Returns nullopt when nothing survives.
std::optional<Chunk> filter_claim_repeats(const Chunk& chunk, const ClaimRecord& claim,
                                          double threshold = 0.8);

class RerankClient {
public:
    virtual ~RerankClient() = default;
    virtual std::string id() const = 0;
    /// One relevance score per document, in input order.
    virtual std::vector<double> score(const std::string& query, const std::vector<std::string>& documents) = 0;
};

/// Scores every chunk and sorts by descending score; ties by ordinal, then URL.
std::vector<Chunk> rerank(const ClaimRecord& claim, std::vector<Chunk> chunks, RerankClient& client);

/// Strict total order used after reranking.
bool ranks_before(const Chunk& a, const Chunk& b);

struct PageSelection {
    std::vector<std::string> urls;  // ranked order
    std::size_t preclaim_selected = 0;
    std::size_t shortfall = 0;
};

/// Top-`k` pages by maximum chunk score, swapping the lowest-ranked
/// non-pre-claim picks for the best remaining pre-claim pages until at least
/// `min_preclaim` precede the claim date. Pages with unknown dates count as
/// not pre-claim.
PageSelection select_pages(const ClaimRecord& claim, std::span<const Chunk> scored_chunks,
                           const std::map<std::string, std::optional<Date>>& pub_dates, std::size_t k = 4,
                           std::size_t min_preclaim = 2);

struct AssembleOptions {
    std::size_t top_chunks = 3;
    std::size_t max_words = kMaxEvidenceWords;
    std::string separator = " ";
    std::vector<std::string> fact_check_domains;
    std::vector<std::string> gold_urls;
};

/// Joins the page's best chunks in score order, dropping the weakest until the
/// text fits `max_words`.
EvidencePiece assemble_evidence(const ClaimRecord& claim, const std::string& url,
                                const std::optional<Date>& pub_date, std::span<const Chunk> scored_chunks,
                                const AssembleOptions& options = {});

struct PipelineConfig {
    std::size_t top_n = 20;
    std::size_t max_chunk_words = kMaxChunkWords;
    double repeat_threshold = 0.8;
    std::size_t pages = 4;
    std::size_t min_preclaim = 2;
    AssembleOptions assemble;
};

struct PipelineResult {
    std::vector<EvidencePiece> evidence;
    PageSelection selection;
    Json trace;
};

PipelineResult run_pipeline(const ClaimRecord& claim, std::span<SearchClient* const> engines,
                            PageFetcher* fetcher, RerankClient& reranker, const PipelineConfig& config = {});

}  // namespace ctxuse::retrieval

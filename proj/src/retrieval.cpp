#include "ctxuse/retrieval.hpp"

#include <algorithm>
#include <set>

#include "ctxuse/text.hpp"
#include "ctxuse/url.hpp"

namespace ctxuse::retrieval {

std::vector<SearchResult> search(const ClaimRecord& claim, std::span<SearchClient* const> engines,
                                 PageFetcher* fetcher, std::size_t top_n) {
    if (engines.empty()) throw ConfigError("no search client configured");
    std::vector<SearchResult> results;
    std::map<std::string, std::size_t> by_url;
    for (auto* engine : engines) {
        auto hits = engine->search(claim.text, top_n);
        if (hits.size() > top_n) hits.resize(top_n);
        const auto name = engine->engine();
        for (auto& hit : hits) {
            auto [it, fresh] = by_url.emplace(hit.url, results.size());
            if (fresh) {
                SearchResult r;
                r.url = hit.url;
                r.title = hit.title;
                r.pub_date = hit.pub_date;
                if (hit.text) r.fetched_text = *hit.text;
                results.push_back(std::move(r));
            }
            auto& r = results[it->second];
            r.rank_per_engine.emplace(name, hit.rank);
            if (!r.pub_date) r.pub_date = hit.pub_date;
            if (r.fetched_text.empty() && hit.text) r.fetched_text = *hit.text;
        }
    }
    if (fetcher) {
        for (auto& r : results) {
            if (!r.fetched_text.empty()) continue;
            try {
                r.fetched_text = fetcher->fetch(r.url);
            } catch (const BackendError&) {
                // Unreachable pages simply contribute no chunks.
            }
        }
    }
    std::erase_if(results, [](const SearchResult& r) { return r.fetched_text.empty(); });
    return results;
}

std::vector<Chunk> chunk_page(std::string_view page_text, const std::string& page_url, std::size_t max_words) {
    if (max_words == 0) throw ConfigError("max_words must be positive");
    const std::string plain = text::looks_like_html(page_text) ? text::html_to_text(page_text)
                                                                : std::string(page_text);
    std::vector<Chunk> chunks;
    auto emit = [&](std::string body, std::size_t words) {
        chunks.push_back({page_url, chunks.size(), std::move(body), words, std::nullopt});
    };
    for (const auto& para : text::split_paragraphs(plain)) {
        const auto words = text::split_whitespace(para);
        if (words.size() < max_words) {
            emit(para, words.size());
            continue;
        }
        for (std::size_t i = 0; i < words.size(); i += max_words) {
            const auto end = std::min(words.size(), i + max_words);
            std::string body;
            for (std::size_t w = i; w < end; ++w) {
                if (w > i) body += ' ';
                body += words[w];
            }
            emit(std::move(body), end - i);
        }
    }
    return chunks;
}

std::optional<Chunk> filter_claim_repeats(const Chunk& chunk, const ClaimRecord& claim, double threshold) {
    std::string kept;
    for (const auto& sentence : text::split_sentences(chunk.text)) {
        if (text::rouge_l(sentence, claim.text) > threshold) continue;
        if (!kept.empty()) kept += ' ';
        kept += sentence;
    }
    kept = text::normalize_whitespace(kept);
    if (kept.empty()) return std::nullopt;
    Chunk out = chunk;
    out.text = std::move(kept);
    out.word_count = count_words(out.text);
    return out;
}

bool ranks_before(const Chunk& a, const Chunk& b) {
    const double sa = a.rerank_score.value_or(-std::numeric_limits<double>::infinity());
    const double sb = b.rerank_score.value_or(-std::numeric_limits<double>::infinity());
    if (sa != sb) return sa > sb;
    if (a.ordinal != b.ordinal) return a.ordinal < b.ordinal;
    return a.page_url < b.page_url;
}

std::vector<Chunk> rerank(const ClaimRecord& claim, std::vector<Chunk> chunks, RerankClient& client) {
    if (chunks.empty()) return chunks;
    std::vector<std::string> docs;
    docs.reserve(chunks.size());
    for (const auto& c : chunks) docs.push_back(c.text);
    const auto scores = client.score(claim.text, docs);
    if (scores.size() != chunks.size()) {
        throw RerankBackendError("reranker returned " + std::to_string(scores.size()) + " scores for " +
                                     std::to_string(chunks.size()) + " documents",
                                 false);
    }
    for (std::size_t i = 0; i < chunks.size(); ++i) chunks[i].rerank_score = scores[i];
    std::stable_sort(chunks.begin(), chunks.end(), ranks_before);
    return chunks;
}

PageSelection select_pages(const ClaimRecord& claim, std::span<const Chunk> scored_chunks,
                           const std::map<std::string, std::optional<Date>>& pub_dates, std::size_t k,
                           std::size_t min_preclaim) {
    if (min_preclaim > k) throw ConfigError("min_preclaim must not exceed k");

    std::map<std::string, double> best;
    for (const auto& c : scored_chunks) {
        const double s = c.rerank_score.value_or(-std::numeric_limits<double>::infinity());
        auto [it, fresh] = best.emplace(c.page_url, s);
        if (!fresh) it->second = std::max(it->second, s);
    }
    std::vector<std::pair<std::string, double>> ranked(best.begin(), best.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    auto preclaim = [&](const std::string& url) {
        if (!claim.claim_date) return false;
        auto it = pub_dates.find(url);
        if (it == pub_dates.end() || !it->second) return false;
        return std::chrono::sys_days(*it->second) < std::chrono::sys_days(*claim.claim_date);
    };

    const std::size_t take = std::min(k, ranked.size());
    std::vector<std::size_t> picked(take);
    for (std::size_t i = 0; i < take; ++i) picked[i] = i;
    std::size_t have = std::count_if(picked.begin(), picked.end(), [&](auto i) { return preclaim(ranked[i].first); });

    std::size_t next = take;
    while (have < min_preclaim) {
        while (next < ranked.size() && !preclaim(ranked[next].first)) ++next;
        if (next >= ranked.size()) break;
        // Lowest-ranked pick that does not already satisfy the constraint.
        auto victim = std::find_if(picked.rbegin(), picked.rend(), [&](auto i) { return !preclaim(ranked[i].first); });
        if (victim == picked.rend()) break;
        *victim = next++;
        ++have;
    }
    std::sort(picked.begin(), picked.end());

    PageSelection sel;
    for (auto i : picked) sel.urls.push_back(ranked[i].first);
    sel.preclaim_selected = have;
    sel.shortfall = have < min_preclaim ? min_preclaim - have : 0;
    return sel;
}

namespace {

bool in_domain_list(const std::string& url, const std::vector<std::string>& domains) {
    if (domains.empty()) return false;
    std::string host;
    try {
        host = registered_domain(url);
    } catch (const MalformedUrl&) {
        return false;
    }
    return std::find(domains.begin(), domains.end(), host) != domains.end();
}

}  // namespace

EvidencePiece assemble_evidence(const ClaimRecord& claim, const std::string& url,
                                const std::optional<Date>& pub_date, std::span<const Chunk> scored_chunks,
                                const AssembleOptions& options) {
    std::vector<Chunk> page;
    for (const auto& c : scored_chunks) {
        if (c.page_url == url) page.push_back(c);
    }
    if (page.empty()) throw EmptyInput("page " + url + " has no surviving chunks");
    std::stable_sort(page.begin(), page.end(), ranks_before);

    std::size_t n = std::min(options.top_chunks, page.size());
    std::string body;
    for (; n > 0; --n) {
        body.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (i) body += options.separator;
            body += page[i].text;
        }
        if (count_words(body) <= options.max_words) break;
    }
    if (n == 0) {
        // A single chunk over the cap only happens with a custom chunk size.
        const auto words = text::split_whitespace(page[0].text);
        body.clear();
        for (std::size_t i = 0; i < std::min(words.size(), options.max_words); ++i) {
            if (i) body += ' ';
            body += words[i];
        }
    }

    EvidencePiece e;
    e.claim_id = claim.id;
    e.text = body;
    e.url = url;
    e.id = fallback_id(body, url);
    e.pub_date = pub_date;
    e.pub_after_claim = published_after(pub_date, claim.claim_date);
    e.is_fact_check_source = in_domain_list(url, options.fact_check_domains);
    e.is_gold_source = std::find(options.gold_urls.begin(), options.gold_urls.end(), url) != options.gold_urls.end();
    return e;
}

PipelineResult run_pipeline(const ClaimRecord& claim, std::span<SearchClient* const> engines,
                            PageFetcher* fetcher, RerankClient& reranker, const PipelineConfig& config) {
    PipelineResult result;
    const auto pages = search(claim, engines, fetcher, config.top_n);

    std::map<std::string, std::optional<Date>> dates;
    std::vector<Chunk> chunks;
    std::size_t raw_chunks = 0, dropped_chunks = 0;
    Json page_trace = Json::array();
    for (const auto& page : pages) {
        dates[page.url] = page.pub_date;
        auto page_chunks = chunk_page(page.fetched_text, page.url, config.max_chunk_words);
        raw_chunks += page_chunks.size();
        for (const auto& c : page_chunks) {
            if (auto kept = filter_claim_repeats(c, claim, config.repeat_threshold)) {
                chunks.push_back(std::move(*kept));
            } else {
                ++dropped_chunks;
            }
        }
        Json ranks = Json::object();
        for (const auto& [engine, rank] : page.rank_per_engine) ranks[engine] = rank;
        page_trace.push_back({{"url", page.url},
                              {"pub_date", page.pub_date ? Json(format_date(*page.pub_date)) : Json()},
                              {"ranks", ranks},
                              {"chunks", page_chunks.size()}});
    }

    chunks = rerank(claim, std::move(chunks), reranker);
    result.selection = select_pages(claim, chunks, dates, config.pages, config.min_preclaim);
    for (const auto& url : result.selection.urls) {
        result.evidence.push_back(assemble_evidence(claim, url, dates.at(url), chunks, config.assemble));
    }

    Json selected = Json::array();
    for (const auto& e : result.evidence) {
        selected.push_back({{"url", e.url}, {"evidence_id", e.id}, {"words", count_words(e.text)}});
    }
    result.trace = {{"claim_id", claim.id},
                    {"segmenter", std::string(text::kSentenceSegmenterId)},
                    {"separator", config.assemble.separator},
                    {"reranker", reranker.id()},
                    {"pages", page_trace},
                    {"chunks", raw_chunks},
                    {"chunks_dropped_as_repeats", dropped_chunks},
                    {"selected", selected},
                    {"preclaim_selected", result.selection.preclaim_selected},
                    {"preclaim_shortfall", result.selection.shortfall}};
    return result;
}

}  // namespace ctxuse::retrieval

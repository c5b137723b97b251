#include "ctxuse/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxuse/hash.hpp"
#include "ctxuse/text.hpp"

namespace ctxuse::lm {

namespace {

std::string with_space(const std::string& label) { return " " + label; }

struct SlotGuard {
    std::counting_semaphore<1024>& sem;
    explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
};

std::ptrdiff_t clamp_concurrency(int n) { return std::clamp(n, 1, 1024); }

Json expect_provider_json(const HttpReply& reply) {
    if (reply.status == 0) throw ProviderError("provider: " + reply.error, true);
    if (reply.status < 200 || reply.status >= 300) {
        throw ProviderError("provider: HTTP " + std::to_string(reply.status), retryable_status(reply.status));
    }
    try {
        return Json::parse(reply.body);
    } catch (const Json::parse_error& e) {
        throw ProviderError(std::string("provider: invalid JSON response: ") + e.what(), false);
    }
}

}  // namespace

double label_mass(const std::map<std::string, double>& candidates, const std::string& label) {
    auto mass_of = [&](const std::string& token) {
        double m = 0.0;
        if (auto it = candidates.find(token); it != candidates.end()) m += std::exp(it->second);
        if (auto it = candidates.find(with_space(token)); it != candidates.end()) m += std::exp(it->second);
        return m;
    };
    if (candidates.count(label) || candidates.count(with_space(label))) return mass_of(label);

    std::string best;
    for (const auto& [token, lp] : candidates) {
        std::string_view t = token;
        if (!t.empty() && t.front() == ' ') t.remove_prefix(1);
        if (t.empty() || t.size() >= label.size()) continue;
        if (label.compare(0, t.size(), t) == 0 && t.size() > best.size()) best = std::string(t);
    }
    return best.empty() ? 0.0 : mass_of(best);
}

VerdictProbabilities verdict_probabilities(const std::map<std::string, double>& surface,
                                           const std::map<std::string, Label>& verbalizer_map, Mode mode) {
    Eigen::Vector3d masses = Eigen::Vector3d::Zero();
    for (const auto& [label, p] : surface) {
        auto it = verbalizer_map.find(label);
        if (it == verbalizer_map.end()) continue;
        if (!(p >= 0.0)) throw InvariantViolation("probability", "negative or NaN mass for '" + label + "'");
        masses(static_cast<int>(it->second)) += p;
    }
    return VerdictProbabilities::renormalize(masses, mode);
}

LabelScore score_labels(LmProvider& provider, const std::string& prompt, const PromptTemplate& tmpl) {
    auto surface = provider.label_probabilities(prompt, tmpl.surface_labels());
    auto probs = verdict_probabilities(surface, tmpl.verbalizer_map, tmpl.mode);
    return {std::move(surface), probs};
}

VerdictProbabilities verdict_probabilities(LmProvider& provider, const std::string& prompt,
                                           const PromptTemplate& tmpl) {
    return score_labels(provider, prompt, tmpl).probabilities;
}

double perplexity_from_logprobs(const std::vector<double>& logprobs) {
    if (logprobs.empty()) throw DegenerateText("no scored tokens");
    const double mean = std::accumulate(logprobs.begin(), logprobs.end(), 0.0) / logprobs.size();
    return std::exp(-mean);
}

double perplexity(LmProvider& provider, const std::string& text) {
    if (text::normalize_whitespace(text).empty()) throw DegenerateText("perplexity of empty text");
    return perplexity_from_logprobs(provider.token_logprobs(text));
}

// ---------------------------------------------------------------------------

HttpLmProvider::HttpLmProvider(ProviderConfig config)
    : config_(std::move(config)), slots_(clamp_concurrency(config_.max_concurrency)) {}

Json HttpLmProvider::call(const Json& request) {
    SlotGuard guard(slots_);
    return config_.retry.run([&] { return expect_provider_json(http_post_json(config_.endpoint, request)); });
}

std::map<std::string, double> HttpLmProvider::label_probabilities(const std::string& prompt,
                                                                  const std::vector<std::string>& labels) {
    const Json response = call({{"model", config_.model},
                                {"prompt", prompt},
                                {"max_tokens", 1},
                                {"temperature", 0},
                                {"logprobs", config_.top_logprobs}});
    std::map<std::string, double> candidates;
    try {
        const auto& top = response.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
        for (const auto& [token, lp] : top.items()) candidates[token] = lp.get<double>();
    } catch (const Json::exception& e) {
        throw ProviderError(std::string("provider: unexpected response shape: ") + e.what(), false);
    }
    std::map<std::string, double> out;
    for (const auto& label : labels) out[label] = label_mass(candidates, label);
    return out;
}

std::vector<double> HttpLmProvider::token_logprobs(const std::string& text) {
    const Json response = call({{"model", config_.model},
                                {"prompt", text},
                                {"max_tokens", 0},
                                {"echo", true},
                                {"temperature", 0},
                                {"logprobs", 0}});
    std::vector<double> out;
    try {
        for (const auto& lp : response.at("choices").at(0).at("logprobs").at("token_logprobs")) {
            if (!lp.is_null()) out.push_back(lp.get<double>());  // the first token has no context
        }
    } catch (const Json::exception& e) {
        throw ProviderError(std::string("provider: unexpected response shape: ") + e.what(), false);
    }
    return out;
}

HttpJudgementProvider::HttpJudgementProvider(ProviderConfig config)
    : config_(std::move(config)), slots_(clamp_concurrency(config_.max_concurrency)) {}

std::string HttpJudgementProvider::complete(const std::string& prompt) {
    SlotGuard guard(slots_);
    const Json request{{"model", config_.model},
                       {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
                       {"temperature", 0},
                       {"max_tokens", 8}};
    const Json response =
        config_.retry.run([&] { return expect_provider_json(http_post_json(config_.endpoint, request)); });
    try {
        return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
        throw ProviderError(std::string("provider: unexpected response shape: ") + e.what(), false);
    }
}

// ---------------------------------------------------------------------------

ReplayProvider::ReplayProvider(std::shared_ptr<ReplayStore> store, ReplayMode mode, std::string provider_id,
                               LmProvider* lm, JudgementProvider* judge)
    : store_(std::move(store)), mode_(mode), provider_id_(std::move(provider_id)), lm_(lm), judge_(judge) {
    if (provider_id_.empty()) throw ConfigError("replay provider needs a provider id");
    if (mode_ != ReplayMode::Passthrough && !store_) throw ConfigError("record/replay mode needs a store");
}

std::string ReplayProvider::record_key(std::string_view kind, std::string_view provider_id, std::string_view prompt) {
    return std::string(kind) + ":" + std::string(provider_id) + ":" + sha256_hex(prompt);
}

std::optional<Json> ReplayProvider::lookup(std::string_view kind, const std::string& prompt) const {
    if (mode_ == ReplayMode::Passthrough) return std::nullopt;
    auto rec = store_->find(record_key(kind, provider_id_, prompt));
    if (!rec && mode_ == ReplayMode::Replay) {
        throw ReplayMiss("no " + std::string(kind) + " record for prompt " + sha256_hex(prompt).substr(0, 16) +
                         " under provider " + provider_id_);
    }
    return rec;
}

std::map<std::string, double> ReplayProvider::label_probabilities(const std::string& prompt,
                                                                  const std::vector<std::string>& labels) {
    if (auto rec = lookup("labels", prompt)) {
        std::map<std::string, double> out;
        const auto& surface = rec->at("surface_probabilities");
        for (const auto& label : labels) {
            auto it = surface.find(label);
            if (it == surface.end()) {
                throw StoreCorruption("record for prompt " + rec->at("prompt_hash").get<std::string>() +
                                      " lacks label '" + label + "'");
            }
            out[label] = it->get<double>();
        }
        return out;
    }
    if (!lm_) throw ConfigError("no language-model provider configured");
    auto surface = lm_->label_probabilities(prompt, labels);
    if (mode_ == ReplayMode::Record) {
        Json surface_json = Json::object();
        double total = 0.0;
        for (const auto& [label, p] : surface) {
            surface_json[label] = p;
            total += p;
        }
        Json normalized = Json::object();
        for (const auto& [label, p] : surface) normalized[label] = total > 0 ? p / total : 0.0;
        store_->append(record_key("labels", provider_id_, prompt), Json{{"kind", "labels"},
                                                                       {"prompt_hash", sha256_hex(prompt)},
                                                                       {"provider_id", provider_id_},
                                                                       {"surface_probabilities", surface_json},
                                                                       {"probabilities", normalized},
                                                                       {"timestamp", utc_timestamp()}});
    }
    return surface;
}

std::vector<double> ReplayProvider::token_logprobs(const std::string& text) {
    if (auto rec = lookup("perplexity", text)) return rec->at("token_logprobs").get<std::vector<double>>();
    if (!lm_) throw ConfigError("no language-model provider configured");
    auto lps = lm_->token_logprobs(text);
    if (mode_ == ReplayMode::Record) {
        store_->append(record_key("perplexity", provider_id_, text), Json{{"kind", "perplexity"},
                                                                         {"prompt_hash", sha256_hex(text)},
                                                                         {"provider_id", provider_id_},
                                                                         {"token_logprobs", lps},
                                                                         {"timestamp", utc_timestamp()}});
    }
    return lps;
}

std::string ReplayProvider::complete(const std::string& prompt) {
    if (auto rec = lookup("judgement", prompt)) return rec->at("reply").get<std::string>();
    if (!judge_) throw ConfigError("no judgement provider configured");
    auto reply = judge_->complete(prompt);
    if (mode_ == ReplayMode::Record) {
        store_->append(record_key("judgement", provider_id_, prompt), Json{{"kind", "judgement"},
                                                                          {"prompt_hash", sha256_hex(prompt)},
                                                                          {"provider_id", provider_id_},
                                                                          {"reply", reply},
                                                                          {"timestamp", utc_timestamp()}});
    }
    return reply;
}

}  // namespace ctxuse::lm

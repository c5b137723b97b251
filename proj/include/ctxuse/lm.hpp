#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "ctxuse/clients.hpp"
#include "ctxuse/model.hpp"
#include "ctxuse/replay.hpp"

namespace ctxuse::lm {

// ---------------------------------------------------------------------------
// Prompts

struct PromptTemplate {
    std::string id;
    Mode mode = Mode::ClaimOnly;
    int shots = 0;
    /// Text with <claimant>, <claim> and <evidence> slots. Lines starting with
    /// "Claimant:" are dropped when include_claimant is false.
    std::string body;
    /// Surface answer token -> canonical label.
    std::map<std::string, Label> verbalizer_map;
    bool include_claimant = true;

    /// Slots agree with the mode and the verbalizer covers all three labels.
    void validate() const;
    std::vector<std::string> surface_labels() const;
};

/// Built-in few-shot and zero-shot templates, keyed by id:
///   llama-claim-3shot, pythia-claim-3shot, claim-0shot,
///   llama-evidence-3shot, pythia-evidence-3shot, evidence-0shot.
const std::map<std::string, PromptTemplate>& builtin_templates();
PromptTemplate builtin_template(const std::string& id, bool include_claimant = true);

/// `<stem>.txt` holds the body, `<stem>.json` the rest:
/// {"id", "mode", "shots", "verbalizer_map": {"Support": "True", ...}, "include_claimant"}.
PromptTemplate load_template(const std::filesystem::path& txt_path);

std::string render_prompt(const PromptTemplate& tmpl, const ClaimRecord& claim,
                          const std::optional<std::string>& evidence = std::nullopt);

/// Instruction used to ask a chat model whether a text cites an external source.
std::string external_source_prompt(std::string_view text);

// ---------------------------------------------------------------------------
// Providers

class LmProvider {
public:
    virtual ~LmProvider() = default;
    virtual std::string id() const = 0;
    /// Probability of each surface label as the next token after `prompt`.
    /// Labels outside the provider's returned candidates get 0.
    virtual std::map<std::string, double> label_probabilities(const std::string& prompt,
                                                              const std::vector<std::string>& labels) = 0;
    /// Natural-log likelihood of every scored token of `text`.
    virtual std::vector<double> token_logprobs(const std::string& text) = 0;
};

/// Free-text completion, used for yes/no judgements.
class JudgementProvider {
public:
    virtual ~JudgementProvider() = default;
    virtual std::string id() const = 0;
    virtual std::string complete(const std::string& prompt) = 0;
};

struct LabelScore {
    std::map<std::string, double> surface;
    VerdictProbabilities probabilities;
};

LabelScore score_labels(LmProvider& provider, const std::string& prompt, const PromptTemplate& tmpl);

/// Surface probabilities mapped through the verbalizer, then renormalised.
VerdictProbabilities verdict_probabilities(LmProvider& provider, const std::string& prompt,
                                           const PromptTemplate& tmpl);
VerdictProbabilities verdict_probabilities(const std::map<std::string, double>& surface,
                                           const std::map<std::string, Label>& verbalizer_map, Mode mode);

/// exp of the negative mean token log-likelihood.
double perplexity(LmProvider& provider, const std::string& text);
double perplexity_from_logprobs(const std::vector<double>& logprobs);

/// Merges the mass of `label` and " label" among `candidates` (token -> logprob).
/// When neither is present, the longest candidate that is a prefix of the
/// label stands in for its first token.
double label_mass(const std::map<std::string, double>& candidates, const std::string& label);

struct ProviderConfig {
    HttpEndpoint endpoint;
    std::string model;
    int max_concurrency = 4;
    int top_logprobs = 20;
    RetryPolicy retry;
};

/// OpenAI-style /v1/completions: top-k logprobs of one generated token, and
/// echo mode for prompt log-likelihoods.
class HttpLmProvider : public LmProvider {
public:
    explicit HttpLmProvider(ProviderConfig config);

    std::string id() const override { return config_.model; }
    std::map<std::string, double> label_probabilities(const std::string& prompt,
                                                      const std::vector<std::string>& labels) override;
    std::vector<double> token_logprobs(const std::string& text) override;

private:
    Json call(const Json& request);

    ProviderConfig config_;
    std::counting_semaphore<1024> slots_;
};

/// OpenAI-style /v1/chat/completions with a single user turn.
class HttpJudgementProvider : public JudgementProvider {
public:
    explicit HttpJudgementProvider(ProviderConfig config);

    std::string id() const override { return config_.model; }
    std::string complete(const std::string& prompt) override;

private:
    ProviderConfig config_;
    std::counting_semaphore<1024> slots_;
};

/// Record/replay wrapper. Records are keyed by kind, provider id and the
/// SHA-256 of the prompt. In replay mode the inner providers are never called.
class ReplayProvider : public LmProvider, public JudgementProvider {
public:
    ReplayProvider(std::shared_ptr<ReplayStore> store, ReplayMode mode, std::string provider_id,
                   LmProvider* lm = nullptr, JudgementProvider* judge = nullptr);

    std::string id() const override { return provider_id_; }
    std::map<std::string, double> label_probabilities(const std::string& prompt,
                                                      const std::vector<std::string>& labels) override;
    std::vector<double> token_logprobs(const std::string& text) override;
    std::string complete(const std::string& prompt) override;

    static std::string record_key(std::string_view kind, std::string_view provider_id, std::string_view prompt);

private:
    std::optional<Json> lookup(std::string_view kind, const std::string& prompt) const;

    std::shared_ptr<ReplayStore> store_;
    ReplayMode mode_;
    std::string provider_id_;
    LmProvider* lm_;
    JudgementProvider* judge_;
};

}  // namespace ctxuse::lm

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "ctxuse/lm.hpp"
#include "ctxuse/pool.hpp"

// After the Eigen-based headers: <resolv.h> defines _res as a macro.
#include <httplib.h>
#include "support.hpp"

using namespace ctxuse;
using namespace ctxuse::lm;

namespace {

ClaimRecord claim_with(std::optional<std::string> claimant = "Jane Doe") {
    ClaimRecord c;
    c.id = "c1";
    c.text = "Water boils at 100 degrees.";
    c.claimant = std::move(claimant);
    c.source = "politifact";
    return c;
}

/// Loopback stand-in for an OpenAI-style completions server.
class MockServer {
public:
    std::atomic<int> completions{0};
    std::atomic<int> chats{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> max_in_flight{0};
    std::atomic<int> fail_next{0};
    Json last_request;
    std::string last_auth;
    std::mutex mutex;

    MockServer() {
        server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
            track([&] {
                ++completions;
                if (fail_next > 0) {
                    --fail_next;
                    res.status = 503;
                    return;
                }
                const auto body = Json::parse(req.body);
                {
                    std::lock_guard lock(mutex);
                    last_request = body;
                    last_auth = req.get_header_value("Authorization");
                }
                Json reply;
                if (body.value("echo", false)) {
                    reply = {{"choices", {{{"logprobs", {{"token_logprobs", {nullptr, std::log(0.5), std::log(0.125)}}}}}}}};
                } else {
                    Json top = {{" True", std::log(0.5)}, {"True", std::log(0.1)}, {" False", std::log(0.2)},
                                {" Non", std::log(0.1)}, {" Ref", std::log(0.05)}};
                    reply = {{"choices", {{{"logprobs", {{"top_logprobs", {top}}}}}}}};
                }
                res.set_content(reply.dump(), "application/json");
            });
        });
        server_.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
            ++chats;
            res.set_content(R"({"choices": [{"message": {"content": "Yes."}}]})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    template <typename F>
    void track(F&& f) {
        const int now = ++in_flight;
        int prev = max_in_flight;
        while (now > prev && !max_in_flight.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        f();
        --in_flight;
    }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

ProviderConfig config_for(const MockServer& server, const std::string& path = "/v1/completions") {
    ProviderConfig cfg;
    cfg.endpoint.url = server.url(path);
    cfg.endpoint.timeout = std::chrono::milliseconds(5000);
    cfg.model = "mock-7b";
    cfg.retry.sleep = [](std::chrono::milliseconds) {};
    return cfg;
}

class TableLm : public LmProvider {
public:
    std::map<std::string, double> probs{{"True", 0.6}, {"False", 0.3}, {"None", 0.1}};
    int calls = 0;
    std::string id() const override { return "table"; }
    std::map<std::string, double> label_probabilities(const std::string&, const std::vector<std::string>& labels) override {
        ++calls;
        std::map<std::string, double> out;
        for (const auto& l : labels) out[l] = probs.count(l) ? probs.at(l) : 0.0;
        return out;
    }
    std::vector<double> token_logprobs(const std::string&) override {
        ++calls;
        return {-1.0, -2.0};
    }
};

}  // namespace

TEST_CASE("built-in templates validate and end with the answer cue") {
    const auto& all = builtin_templates();
    CHECK(all.size() == 6);
    for (const auto& [id, t] : all) {
        CHECK(id == t.id);
        CHECK_NOTHROW(t.validate());
        CHECK(t.body.size() > 7);
        CHECK(t.body.substr(t.body.size() - 7) == "Answer:");
    }
    CHECK(builtin_template("llama-evidence-3shot").verbalizer_map.at("Support") == Label::True);
    CHECK(builtin_template("llama-evidence-3shot").verbalizer_map.at("Refute") == Label::False);
    CHECK(builtin_template("claim-0shot").shots == 0);
    CHECK_THROWS(builtin_template("nope"));
}

TEST_CASE("template validation") {
    auto t = builtin_template("claim-0shot");
    t.body += " <evidence>";
    CHECK_THROWS_AS(t.validate(), InvariantViolation);
    t = builtin_template("evidence-0shot");
    t.verbalizer_map.erase("None");
    CHECK_THROWS_AS(t.validate(), InvariantViolation);
}

TEST_CASE("prompt rendering") {
    const auto t = builtin_template("claim-0shot");
    const auto p = render_prompt(t, claim_with());
    CHECK(p.find("Claimant: Jane Doe\nClaim: \"Water boils at 100 degrees.\"\nAnswer:") != std::string::npos);
    CHECK(p.find("<claim>") == std::string::npos);

    const auto no_claimant = builtin_template("claim-0shot", false);
    const auto q = render_prompt(no_claimant, claim_with(std::nullopt));
    CHECK(q.find("Claimant:") == std::string::npos);

    CHECK_THROWS_AS(render_prompt(t, claim_with(std::nullopt)), MissingSlotValue);
    CHECK_THROWS_AS(render_prompt(t, claim_with(), std::string("ev")), InvariantViolation);
    const auto te = builtin_template("evidence-0shot");
    CHECK_THROWS_AS(render_prompt(te, claim_with()), MissingSlotValue);
    auto empty = claim_with();
    empty.text.clear();
    CHECK_THROWS_AS(render_prompt(t, empty), MissingSlotValue);

    // Slot-like text inside values is not expanded.
    auto tricky = claim_with("<claim>");
    const auto r = render_prompt(te, tricky, std::string("see <claimant>"));
    CHECK(r.find("Claimant: <claim>\n") != std::string::npos);
    CHECK(r.find("Evidence: \"see <claimant>\"") != std::string::npos);
}

TEST_CASE("few-shot exemplars are verbatim") {
    const auto p = render_prompt(builtin_template("llama-claim-3shot"), claim_with());
    CHECK(p.rfind("Are the following claims True or False? Answer None if you are not sure or cannot answer.\n\n", 0) == 0);
    CHECK(p.find("$31.4 trillion") != std::string::npos);
    CHECK(p.find("\xE2\x80\x9COne quarter\xE2\x80\x9D") != std::string::npos);
    CHECK(p.find("Answer: True\n\n") != std::string::npos);
}

TEST_CASE("templates load from text and sidecar files") {
    testing::TempDir dir;
    testing::write_file(dir / "mine.txt", "Q: <claim>\nClaimant: <claimant>\nAnswer:");
    testing::write_file(dir / "mine.json",
                        R"({"id": "mine", "mode": "claim-only", "shots": 0, "include_claimant": false,
                           "verbalizer_map": {"Yes": "True", "No": "False", "Unsure": "None"}})");
    const auto t = load_template(dir / "mine.txt");
    CHECK(t.id == "mine");
    CHECK_FALSE(t.include_claimant);
    CHECK(render_prompt(t, claim_with(std::nullopt)) == "Q: Water boils at 100 degrees.\nAnswer:");
}

TEST_CASE("label mass merges leading-space variants and falls back to prefixes") {
    const std::map<std::string, double> cands{{" True", std::log(0.5)}, {"True", std::log(0.1)},
                                              {" Ref", std::log(0.05)}, {"Re", std::log(0.01)}};
    CHECK(label_mass(cands, "True") == doctest::Approx(0.6));
    CHECK(label_mass(cands, "Refute") == doctest::Approx(0.05));
    CHECK(label_mass(cands, "None") == 0.0);
}

TEST_CASE("verdict probabilities renormalise through the verbalizer") {
    const std::map<std::string, Label> verb{{"Support", Label::True}, {"Refute", Label::False}, {"None", Label::None}};
    const auto p = verdict_probabilities({{"Support", 0.2}, {"Refute", 0.1}, {"None", 0.1}, {"Other", 5.0}}, verb,
                                         Mode::ClaimEvidence);
    CHECK(p[Label::True] == doctest::Approx(0.5));
    CHECK(p[Label::False] == doctest::Approx(0.25));
    CHECK(p.mode() == Mode::ClaimEvidence);
    CHECK_THROWS_AS(verdict_probabilities({{"Support", 0.0}}, verb, Mode::ClaimOnly), ZeroMass);
}

TEST_CASE("perplexity") {
    CHECK(perplexity_from_logprobs({std::log(0.5), std::log(0.5)}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(perplexity_from_logprobs({}), DegenerateText);
    TableLm lm;
    CHECK(perplexity(lm, "text") == doctest::Approx(std::exp(1.5)));
    CHECK_THROWS_AS(perplexity(lm, "  "), DegenerateText);
}

TEST_CASE("HTTP provider reads top logprobs") {
    MockServer server;
    HttpLmProvider lm(config_for(server));
    const auto t = builtin_template("claim-0shot");
    const auto score = score_labels(lm, render_prompt(t, claim_with()), t);
    CHECK(score.surface.at("True") == doctest::Approx(0.6));
    CHECK(score.surface.at("False") == doctest::Approx(0.2));
    CHECK(score.surface.at("None") == doctest::Approx(0.1));
    CHECK(score.probabilities[Label::True] == doctest::Approx(0.6 / 0.9));
    CHECK(server.last_request["max_tokens"] == 1);
    CHECK(server.last_request["logprobs"] == 20);
    CHECK(server.last_request["model"] == "mock-7b");

    CHECK(lm.token_logprobs("abc") == std::vector<double>{std::log(0.5), std::log(0.125)});
    CHECK(server.last_request["echo"] == true);
    CHECK(server.last_request["max_tokens"] == 0);
    CHECK(perplexity(lm, "abc") == doctest::Approx(4.0));
}

TEST_CASE("HTTP provider retries server errors and sends the bearer token") {
    MockServer server;
    auto cfg = config_for(server);
    cfg.endpoint.api_key_env = "CTXUSE_TEST_KEY";
    ::setenv("CTXUSE_TEST_KEY", "secret", 1);
    HttpLmProvider lm(cfg);
    server.fail_next = 2;
    CHECK_NOTHROW(lm.label_probabilities("p", {"True"}));
    CHECK(server.completions == 3);
    CHECK(server.last_auth == "Bearer secret");

    server.fail_next = 5;
    CHECK_THROWS_AS(lm.label_probabilities("p", {"True"}), ProviderError);

    ::unsetenv("CTXUSE_TEST_KEY");
    CHECK_THROWS_AS(lm.label_probabilities("p", {"True"}), ConfigError);
}

TEST_CASE("HTTP provider honours its concurrency limit") {
    MockServer server;
    auto cfg = config_for(server);
    cfg.max_concurrency = 2;
    HttpLmProvider lm(cfg);
    parallel_map(8, 8, [&](std::size_t i) { return lm.label_probabilities("p" + std::to_string(i), {"True"}); });
    CHECK(server.completions == 8);
    CHECK(server.max_in_flight <= 2);
}

TEST_CASE("judgement provider") {
    MockServer server;
    HttpJudgementProvider judge(config_for(server, "/v1/chat/completions"));
    CHECK(judge.complete("Does it cite a source?") == "Yes.");
    CHECK(server.chats == 1);
}

TEST_CASE("unreachable provider fails with a retryable error") {
    ProviderConfig cfg;
    cfg.endpoint.url = "http://127.0.0.1:1/v1/completions";
    cfg.endpoint.timeout = std::chrono::milliseconds(500);
    cfg.retry.max_attempts = 1;
    HttpLmProvider lm(cfg);
    try {
        lm.label_probabilities("p", {"True"});
        FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
        CHECK(e.retryable());
    }
}

TEST_CASE("record then replay without the inner provider") {
    testing::TempDir dir;
    TableLm inner;
    {
        auto store = std::make_shared<ReplayStore>(dir / "store.jsonl", true);
        ReplayProvider rec(store, ReplayMode::Record, "table", &inner);
        CHECK(rec.label_probabilities("prompt one", {"True", "False", "None"}).at("True") == 0.6);
        CHECK(rec.token_logprobs("text") == std::vector<double>{-1.0, -2.0});
        CHECK(inner.calls == 2);
        CHECK(store->size() == 2);
    }
    auto store = std::make_shared<ReplayStore>(dir / "store.jsonl", false);
    ReplayProvider replay(store, ReplayMode::Replay, "table");
    const auto probs = replay.label_probabilities("prompt one", {"True", "False", "None"});
    CHECK(probs.at("False") == 0.3);
    CHECK(replay.token_logprobs("text") == std::vector<double>{-1.0, -2.0});
    CHECK_THROWS_AS(replay.label_probabilities("prompt two", {"True"}), ReplayMiss);
    CHECK_THROWS_AS(replay.label_probabilities("prompt one", {"Maybe"}), StoreCorruption);
    CHECK_THROWS_AS(replay.complete("anything"), ReplayMiss);

    const auto rec = store->find(ReplayProvider::record_key("labels", "table", "prompt one"));
    REQUIRE(rec.has_value());
    CHECK((*rec)["probabilities"]["True"].get<double>() == doctest::Approx(0.6));
    CHECK((*rec)["provider_id"] == "table");

    ReplayProvider other(store, ReplayMode::Replay, "other-model");
    CHECK_THROWS_AS(other.label_probabilities("prompt one", {"True"}), ReplayMiss);
}

TEST_CASE("replay store detects corruption") {
    testing::TempDir dir;
    {
        ReplayStore store(dir / "s.jsonl", true);
        store.append("k1", Json{{"value", 1}});
        store.append("k1", Json{{"value", 2}});
        store.append("k2", Json{{"value", 3}});
        CHECK(store.size() == 2);
        CHECK((*store.find("k1"))["value"] == 1);
    }
    CHECK(ReplayStore(dir / "s.jsonl", false).size() == 2);

    auto body = testing::read_file(dir / "s.jsonl");
    testing::write_file(dir / "truncated.jsonl", body.substr(0, body.size() - 5));
    CHECK_THROWS_AS(ReplayStore(dir / "truncated.jsonl", false), StoreCorruption);

    auto tampered = body;
    tampered.replace(tampered.find("\"value\":3"), 9, "\"value\":4");
    testing::write_file(dir / "tampered.jsonl", tampered);
    CHECK_THROWS_AS(ReplayStore(dir / "tampered.jsonl", false), StoreCorruption);

    CHECK_THROWS(ReplayStore(dir / "missing.jsonl", false));
}

TEST_CASE("external source prompt embeds the text") {
    const auto p = external_source_prompt("According to NASA, x.");
    CHECK(p.find("According to NASA, x.") != std::string::npos);
}

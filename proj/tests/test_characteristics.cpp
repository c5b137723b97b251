#include <doctest.h>

#include <random>

#include "ctxuse/characteristics.hpp"
#include "ctxuse/lm.hpp"
#include "ctxuse/text.hpp"
#include "support.hpp"

using namespace ctxuse;
using namespace ctxuse::characteristics;

namespace {

// Counts membership over the enumerated vocabulary instead of intersecting sets.
struct SetCounts {
    std::size_t in_claim = 0, in_evidence = 0, in_both = 0, in_either = 0;
};

SetCounts enumerate(const std::vector<std::string>& vocab, const std::vector<std::string>& claim,
                    const std::vector<std::string>& evidence) {
    SetCounts s;
    for (const auto& w : vocab) {
        const bool c = std::find(claim.begin(), claim.end(), w) != claim.end();
        const bool e = std::find(evidence.begin(), evidence.end(), w) != evidence.end();
        s.in_claim += c;
        s.in_evidence += e;
        s.in_both += c && e;
        s.in_either += c || e;
    }
    return s;
}

std::string join(const std::vector<std::string>& ws) {
    std::string s;
    for (const auto& w : ws) s += (s.empty() ? "" : " ") + w;
    return s;
}

class ScriptedJudge : public lm::JudgementProvider {
public:
    std::string reply = "Yes";
    int calls = 0;
    std::string id() const override { return "scripted"; }
    std::string complete(const std::string&) override {
        ++calls;
        return reply;
    }
};

class ConstantLm : public lm::LmProvider {
public:
    std::string id() const override { return "constant"; }
    std::map<std::string, double> label_probabilities(const std::string&, const std::vector<std::string>&) override {
        return {};
    }
    std::vector<double> token_logprobs(const std::string&) override { return {std::log(0.5), std::log(0.25)}; }
};

HedgeLexicon small_lexicon() { return {{"might", "may"}, {"according to", "it seems"}}; }

}  // namespace

TEST_CASE("jaccard and overlap against set enumeration") {
    std::mt19937 rng(99);
    std::vector<std::string> vocab;
    for (int i = 0; i < 15; ++i) vocab.push_back("w" + std::to_string(i));
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::string> claim(1 + rng() % 8), evidence(rng() % 12);
        for (auto& w : claim) w = vocab[rng() % vocab.size()];
        for (auto& w : evidence) w = vocab[rng() % vocab.size()];
        const auto s = enumerate(vocab, claim, evidence);
        const auto j = jaccard(join(claim), join(evidence));
        const double ov = claim_evidence_overlap(join(claim), join(evidence));
        CHECK(j.value == doctest::Approx(static_cast<double>(s.in_both) / s.in_either).epsilon(1e-12));
        CHECK(ov == doctest::Approx(static_cast<double>(s.in_both) / s.in_claim).epsilon(1e-12));
        CHECK(j.value <= ov + 1e-15);
    }
}

TEST_CASE("similarity edge cases") {
    CHECK(jaccard("", "").degenerate);
    CHECK(jaccard("", "").value == 0.0);
    CHECK(jaccard("The Cat", "the cat!").value == 1.0);
    CHECK_THROWS_AS(claim_evidence_overlap("...", "text"), DegenerateClaim);
    CHECK(repeats_claim("The cat  sat.", "Yesterday THE CAT sat. Then it left."));
    CHECK_FALSE(repeats_claim("The cat sat.", "The dog sat."));
    CHECK(claim_evidence_overlap("The cat sat.", "Yesterday THE CAT sat.") == 1.0);
}

TEST_CASE("syllable counting") {
    CHECK(count_syllables("cat") == 1);
    CHECK(count_syllables("table") == 2);
    CHECK(count_syllables("make") == 1);
    CHECK(count_syllables("the") == 1);
    CHECK(count_syllables("readability") == 5);
    CHECK(count_syllables("rhythm") == 1);
    CHECK(count_syllables("queue") == 1);
    CHECK(count_syllables("") == 1);
}

TEST_CASE("flesch reading ease") {
    CHECK(flesch_reading_ease("The cat sat.") == doctest::Approx(119.19).epsilon(1e-9));
    const auto c = readability_counts("The cat sat. A table fell!");
    CHECK(c.words == 6);
    CHECK(c.sentences == 2);
    CHECK(c.syllables == 7);
    CHECK(flesch_reading_ease("The cat sat. A table fell!") ==
          doctest::Approx(206.835 - 1.015 * 3 - 84.6 * 7.0 / 6));
    CHECK_THROWS_AS(flesch_reading_ease("  "), DegenerateText);
}

TEST_CASE("entity heuristic") {
    HeuristicEntityProvider ner;
    CHECK(ner.entities("Barack Obama visited Paris.") == std::vector<std::string>{"Barack Obama", "Paris"});
    CHECK(ner.entities("Yesterday it rained.").empty());
    CHECK(ner.entities("I think so.").empty());
    CHECK(ner.entities("Officials in Belfast, Northern Ireland agreed.") ==
          std::vector<std::string>{"Belfast", "Northern Ireland"});
    CHECK(ner.entities("\xE2\x80\x9CNASA\xE2\x80\x9D said so.") == std::vector<std::string>{"NASA"});
}

TEST_CASE("entity overlap is whole-word and case-sensitive") {
    HeuristicEntityProvider ner;
    auto eo = entity_overlap("Joe Biden met Emmanuel Macron.", "Macron spoke with Joe Biden.", ner);
    CHECK(eo.value == doctest::Approx(0.5));
    CHECK_FALSE(eo.no_entity);
    eo = entity_overlap("Joe Biden spoke.", "joe biden spoke", ner);
    CHECK(eo.value == 0.0);
    eo = entity_overlap("Ann spoke in Paris.", "Parisian news", ner);
    CHECK(eo.value == 0.0);
    eo = entity_overlap("it rained.", "anything", ner);
    CHECK(eo.no_entity);
    CHECK(eo.value == 1.0);
}

TEST_CASE("yes/no judgements") {
    CHECK(parse_yes_no(" Yes. "));
    CHECK_FALSE(parse_yes_no("no"));
    CHECK_THROWS_AS(parse_yes_no("maybe"), UnparseableJudgement);
    ScriptedJudge judge;
    CHECK(refers_external_source("According to Reuters, x.", judge));
    judge.reply = "No";
    CHECK_FALSE(refers_external_source("x", judge));
}

TEST_CASE("hedging flags") {
    const auto lex = small_lexicon();
    auto f = hedging_flags("It might rain.", lex);
    CHECK(f.hedging);
    CHECK_FALSE(f.hedging_discourse);
    f = hedging_flags("The mighty river.", lex);
    CHECK_FALSE(f.hedging);
    f = hedging_flags("ACCORDING TO the report", lex);
    CHECK(f.hedging_discourse);
    f = hedging_flags("to according the report", lex);
    CHECK_FALSE(f.hedging_discourse);
    f = hedging_flags("Nothing here.", lex);
    CHECK_FALSE(f.hedging);
    CHECK_FALSE(f.hedging_discourse);
}

TEST_CASE("shipped hedge lexicon loads") {
    const std::filesystem::path data = CTXUSE_TEST_DATA_DIR "/../../data";
    const auto lex = HedgeLexicon::load(data / "hedge_words.txt", data / "hedging_discourse_markers.txt");
    CHECK(lex.hedge_words.count("might"));
    CHECK(lex.discourse_markers.count("according to"));
    for (const auto& w : lex.hedge_words) CHECK(w == text::to_lower_ascii(w));

    testing::TempDir dir;
    testing::write_file(dir / "empty.txt", "# nothing\n");
    CHECK_THROWS_AS(HedgeLexicon::load(dir / "empty.txt", data / "hedging_discourse_markers.txt"), ConfigError);
}

TEST_CASE("reliability lists") {
    testing::TempDir dir;
    testing::write_file(dir / "list.txt",
                        "# comment\nnaturalnews.com conspiracy-pseudoscience\nreuters.com reliable\n"
                        "theonion.com satire\nbbc.co.uk reliable\n");
    const auto list = ReliabilityList::load(dir / "list.txt");
    CHECK(list.size() == 4);
    CHECK(unreliable_source("https://www.naturalnews.com/a", list) == Reliability::Unreliable);
    CHECK(unreliable_source("https://reuters.com/b", list) == Reliability::Reliable);
    CHECK(unreliable_source("https://news.bbc.co.uk/c", list) == Reliability::Reliable);
    CHECK(unreliable_source("https://unknown.org/d", list) == Reliability::Unknown);
    CHECK(list.category("theonion.com") == SourceCategory::Satire);

    testing::write_file(dir / "bad.txt", "example.com\n");
    CHECK_THROWS_AS(ReliabilityList::load(dir / "bad.txt"), ConfigError);
    testing::write_file(dir / "bad2.txt", "example.com great\n");
    CHECK_THROWS_AS(ReliabilityList::load(dir / "bad2.txt"), ConfigError);
}

TEST_CASE("flagged ratings win over coverage entries") {
    ReliabilityList list;
    list.add("x.com", SourceCategory::Reliable);
    list.add("x.com", SourceCategory::Questionable);
    list.add("y.com", SourceCategory::Satire);
    list.add("y.com", SourceCategory::Reliable);
    CHECK(list.classify("x.com") == Reliability::Unreliable);
    CHECK(list.classify("y.com") == Reliability::Unreliable);
}

TEST_CASE("verdict words are case-sensitive whole words") {
    auto w = verdict_word_flags("This claim is False. It is not True-ish.");
    CHECK(w.contains_false);
    CHECK(w.contains_true);
    w = verdict_word_flags("true and false, Truest, Falsehood");
    CHECK_FALSE(w.contains_true);
    CHECK_FALSE(w.contains_false);
}

TEST_CASE("characterize and summarize") {
    ClaimRecord claim;
    claim.id = "c1";
    claim.text = "Joe Biden won in 2020.";
    claim.source = "politifact";
    claim.claim_date = parse_date("2021-01-01");
    EvidencePiece e1;
    e1.id = "e1";
    e1.claim_id = "c1";
    e1.text = "According to officials, Joe Biden won in 2020. That is True.";
    e1.url = "https://reuters.com/x";
    e1.pub_date = parse_date("2021-02-01");
    e1.is_fact_check_source = true;
    EvidencePiece e2 = e1;
    e2.id = "e2";
    e2.text = "Nothing relevant here might be said.";
    e2.url = "https://naturalnews.com/y";
    e2.pub_date = parse_date("2020-01-01");
    e2.is_fact_check_source = false;
    e2.is_gold_source = true;

    const auto lex = small_lexicon();
    ReliabilityList list;
    list.add("reuters.com", SourceCategory::Reliable);
    list.add("naturalnews.com", SourceCategory::Questionable);
    HeuristicEntityProvider ner;
    ScriptedJudge judge;
    ConstantLm lm;
    Detectors det{&lex, &list, &ner, &judge, &lm, "Llama"};

    const auto o1 = characterize(claim, e1, det);
    CHECK(o1.errors.empty());
    CHECK(o1.vector.repeats_claim);
    CHECK(o1.vector.claim_evidence_overlap == 1.0);
    CHECK(o1.vector.hedging_discourse);
    CHECK_FALSE(o1.vector.hedging);
    CHECK(o1.vector.contains_true_word);
    CHECK(o1.vector.unreliable == Reliability::Reliable);
    CHECK(o1.vector.pub_after_claim == true);
    CHECK(o1.vector.refers_external == true);
    CHECK(*o1.vector.perplexity == doctest::Approx(std::exp(-(std::log(0.5) + std::log(0.25)) / 2)));
    CHECK(o1.vector.claim_len_chars == claim.text.size());
    CHECK(o1.vector.entity_overlap == 1.0);

    judge.reply = "perhaps";
    const auto o2 = characterize(claim, e2, det);
    CHECK(o2.errors.count("refers_external"));
    CHECK_FALSE(o2.vector.refers_external.has_value());
    CHECK(o2.vector.unreliable == Reliability::Unreliable);
    CHECK(o2.vector.hedging);
    CHECK(o2.vector.pub_after_claim == false);

    const std::vector<DetectorOutcome> outcomes{o1, o2};
    const auto s = summarize(outcomes, "Llama");
    CHECK(s["Total instances"] == 2);
    CHECK(s["Detection by LLM (%)"]["percent"].get<double>() == doctest::Approx(100.0));
    CHECK(s["Detection by LLM (%)"]["n"] == 1);
    CHECK(s["Detection by LLM (%)"]["skipped"] == 1);
    CHECK(s["Unreliable source (%)"]["percent"].get<double>() == doctest::Approx(50.0));
    CHECK(s["Fact-check source (%)"]["percent"].get<double>() == doctest::Approx(50.0));
    CHECK(s["Llama: Perplexity"]["n"] == 2);
    CHECK(s["skipped"]["refers_external"] == 1);
    const double j1 = o1.vector.jaccard, j2 = o2.vector.jaccard;
    CHECK(s["Jaccard similarity"]["mean"].get<double>() == doctest::Approx((j1 + j2) / 2));
    CHECK(s["Jaccard similarity"]["std"].get<double>() == doctest::Approx(std::abs(j1 - j2) / 2));

    std::vector<std::string> keys;
    for (const auto& [k, v] : s.items()) keys.push_back(k);
    keys.pop_back();  // "skipped"
    CHECK(keys == summary_rows("Llama"));
}

TEST_CASE("disabled detectors leave fields empty") {
    ClaimRecord claim;
    claim.id = "c";
    claim.text = "A claim.";
    EvidencePiece e;
    e.id = "e";
    e.claim_id = "c";
    e.text = "Some evidence.";
    const auto o = characterize(claim, e, Detectors{});
    CHECK_FALSE(o.vector.perplexity.has_value());
    CHECK_FALSE(o.vector.refers_external.has_value());
    CHECK(o.vector.unreliable == Reliability::Unknown);
    CHECK_FALSE(o.vector.pub_after_claim.has_value());

    const auto empty = summarize(std::span<const DetectorOutcome>{});
    CHECK(empty["Total instances"] == 0);
    CHECK(empty["Jaccard similarity"]["mean"].is_null());
}

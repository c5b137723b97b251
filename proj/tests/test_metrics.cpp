#include <doctest.h>

#include <algorithm>
#include <random>

#include "ctxuse/metrics.hpp"
#include "golden.hpp"

using namespace ctxuse;
using namespace ctxuse::metrics;

namespace {

// Direct transcription of the piecewise rescaling, used as the reference.
double delta_ref(double with, double without) {
    if (with >= without) return without == 1.0 ? 0.0 : (with - without) / (1.0 - without);
    return (with - without) / without;
}

int d_ref(Label l, Stance s) {
    // Refuting evidence should raise False; supporting evidence should raise
    // True; insufficient evidence should raise None, and insufficient-refutes
    // additionally False, insufficient-supports additionally True.
    switch (s) {
        case Stance::Supports: return l == Label::True ? 1 : -1;
        case Stance::Refutes: return l == Label::False ? 1 : -1;
        case Stance::InsufficientSupports: return l == Label::False ? -1 : 1;
        case Stance::InsufficientRefutes: return l == Label::True ? -1 : 1;
        case Stance::InsufficientNeutral:
        case Stance::InsufficientContradictory: return l == Label::None ? 1 : -1;
    }
    return 0;
}

}  // namespace

TEST_CASE("delta_p piecewise definition") {
    CHECK(delta_p(0.75, 0.5).value == doctest::Approx(0.5));
    CHECK(delta_p(0.25, 0.5).value == doctest::Approx(-0.5));
    CHECK(delta_p(0.3, 0.3).value == 0.0);
    CHECK(delta_p(1.0, 0.2).value == 1.0);
    CHECK(delta_p(0.0, 0.2).value == -1.0);
    const auto same_one = delta_p(1.0, 1.0);
    CHECK(same_one.value == 0.0);
    CHECK(same_one.degenerate);
    CHECK(delta_p(0.0, 0.0).value == 0.0);
    CHECK_FALSE(delta_p(0.0, 0.0).degenerate);
    CHECK_THROWS_AS(delta_p(1.1, 0.5), InvariantViolation);
    CHECK_THROWS_AS(delta_p(0.5, -0.1), InvariantViolation);
    CHECK(delta_p(0.75f, 0.5f).value == doctest::Approx(0.5f));
}

TEST_CASE("delta_p properties on random inputs") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double a = u(rng), b = u(rng), c = u(rng);
        const double d = delta_p(a, b).value;
        CHECK(d >= -1.0);
        CHECK(d <= 1.0);
        CHECK(d == doctest::Approx(delta_ref(a, b)).epsilon(1e-12));
        if (a <= c) CHECK(delta_p(a, b).value <= delta_p(c, b).value);
    }
}

TEST_CASE("desirability table matches the stance rule") {
    const DesirabilityTable table;
    for (Label l : kLabels) {
        for (Stance s : kStances) CHECK(table(l, s) == d_ref(l, s));
    }
    CHECK(desirability(Label::False, Stance::Refutes) == 1);
    CHECK(desirability(Label::True, Stance::Refutes) == -1);
    CHECK(desirability(Label::None, Stance::Refutes) == -1);
    DesirabilityTable::Matrix bad = table.matrix();
    bad(0, 0) = 0;
    CHECK_THROWS_AS(DesirabilityTable{bad}, InvariantViolation);
}

TEST_CASE("gated worked examples reproduce their printed ACU") {
    struct Case {
        const char* id;
        const char* model;
    };
    for (const auto& c : {Case{"15a", "Llama"}, Case{"19b", "Pythia"}, Case{"20b", "Llama"}}) {
        const auto& row = *std::find_if(golden::kRows.begin(), golden::kRows.end(),
                                        [&](const auto& r) { return r.id == c.id && r.model == c.model; });
        const Eigen::Vector3d without = Eigen::Vector3d::Map(row.without.data());
        const Eigen::Vector3d with = Eigen::Vector3d::Map(row.with.data());
        CAPTURE(c.id);
        CHECK(std::abs(acu(without, with, row.stance, AcuForm::Sum) - row.printed_acu) <= golden::kTolerance);
    }
    const Eigen::Vector3d wo(0.69, 0.17, 0.14), w(0.84, 0.15, 0.01);
    CHECK(acu(wo, w, Stance::Refutes, AcuForm::Sum) == doctest::Approx(1.5301).epsilon(1e-3));
}

TEST_CASE("mean form is a third of the sum form") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const Eigen::Vector3d a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
        const Stance s = kStances[rng() % 6];
        const double sum = acu(a, b, s, AcuForm::Sum);
        const double mean = acu(a, b, s, AcuForm::Mean);
        CHECK(mean * 3 == doctest::Approx(sum).epsilon(1e-12));
        CHECK(mean >= -1.0);
        CHECK(mean <= 1.0);
        double ref = 0.0;
        for (Label l : kLabels) ref += d_ref(l, s) * delta_ref(b(static_cast<int>(l)), a(static_cast<int>(l)));
        CHECK(sum == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("score_sample fills every field") {
    const auto wo = VerdictProbabilities::from_normalized(Eigen::Vector3d(0.5, 0.25, 0.25), Mode::ClaimOnly);
    const auto w = VerdictProbabilities::from_normalized(Eigen::Vector3d(0.75, 0.125, 0.125), Mode::ClaimEvidence);
    const auto s = score_sample("c", "e", Stance::Refutes, wo, w, AcuForm::Mean, "m", "p");
    CHECK(s.delta_p(0) == doctest::Approx(0.5));
    CHECK(s.delta_p(1) == doctest::Approx(-0.5));
    CHECK(s.acu == doctest::Approx((0.5 + 0.5 + 0.5) / 3));
    CHECK(s.acu_form == AcuForm::Mean);
    CHECK_FALSE(s.degenerate);
    CHECK(scored_from_json(to_json(s)) == s);

    const auto certain = VerdictProbabilities::from_normalized(Eigen::Vector3d(1.0, 0.0, 0.0), Mode::ClaimOnly);
    const auto certain2 = VerdictProbabilities::from_normalized(Eigen::Vector3d(1.0, 0.0, 0.0), Mode::ClaimEvidence);
    CHECK(score_sample("c", "e", Stance::Refutes, certain, certain2, AcuForm::Sum, "m", "p").degenerate);

    const auto unlabeled = score_sample("c", "e", std::nullopt, wo, w, AcuForm::Sum, "m", "p");
    CHECK_FALSE(unlabeled.stance.has_value());
    CHECK(unlabeled.acu == 0.0);
}

TEST_CASE("memory conflict truth table") {
    for (Label l : kLabels) {
        for (Stance s : kStances) {
            const bool expected = (l == Label::True && s == Stance::Refutes) || (l == Label::False && s == Stance::Supports);
            CHECK(memory_conflict(l, s) == expected);
        }
    }
}

TEST_CASE("inter-context conflicts") {
    using S = Stance;
    CHECK(inter_context_conflict(std::vector<S>{S::Supports, S::InsufficientNeutral, S::Refutes}));
    CHECK_FALSE(inter_context_conflict(std::vector<S>{S::Supports, S::InsufficientRefutes}));
    CHECK_FALSE(inter_context_conflict(std::vector<S>{}));

    EvidencePiece a, b;
    a.id = "a";
    a.claim_id = "c";
    a.stance = S::Supports;
    b.id = "b";
    b.claim_id = "c";
    b.stance = S::Refutes;
    CHECK(inter_context_conflict("c", std::vector<EvidencePiece>{a, b}));
    b.claim_id = "d";
    CHECK_THROWS_AS(inter_context_conflict("c", std::vector<EvidencePiece>{a, b}), InvariantViolation);
}

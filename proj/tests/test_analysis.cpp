#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "ctxuse/analysis.hpp"
#include "ctxuse/characteristics.hpp"

using namespace ctxuse;
using namespace ctxuse::analysis;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Rank by counting: strictly smaller values plus the midpoint of the tie run.
std::vector<double> count_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double w : v) {
            less += w < v[i];
            equal += w == v[i];
        }
        r[i] = less + (equal + 1) / 2;
    }
    return r;
}

double pearson_ref(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    const double ma = sa / n, mb = sb / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// 1 - 6 sum d^2 / (n (n^2 - 1)), valid without ties.
double rank_difference_rho(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = count_ranks(x), ry = count_ranks(y);
    const double n = static_cast<double>(x.size());
    double d2 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    return 1 - 6 * d2 / (n * (n * n - 1));
}

Eigen::VectorXd vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Nominal alpha from pooled pairable values: Do averages within-unit pairs,
// De averages all pairs drawn from the pool.
double alpha_ref(const std::vector<std::vector<double>>& units) {
    std::vector<double> pool;
    double disagree = 0;
    for (const auto& u : units) {
        std::vector<double> vals;
        for (double v : u) {
            if (!std::isnan(v)) vals.push_back(v);
        }
        if (vals.size() < 2) continue;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            for (std::size_t j = 0; j < vals.size(); ++j) {
                if (i != j && vals[i] != vals[j]) disagree += 1.0 / static_cast<double>(vals.size() - 1);
            }
        }
        pool.insert(pool.end(), vals.begin(), vals.end());
    }
    const double n = static_cast<double>(pool.size());
    double pairs = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (std::size_t j = 0; j < pool.size(); ++j) pairs += i != j && pool[i] != pool[j];
    }
    const double d_o = disagree / n, d_e = pairs / (n * (n - 1));
    return 1 - d_o / d_e;
}

Eigen::MatrixXd matrix(const std::vector<std::vector<double>>& units) {
    Eigen::MatrixXd m(units.size(), units.front().size());
    for (std::size_t u = 0; u < units.size(); ++u) {
        for (std::size_t c = 0; c < units[u].size(); ++c) m(u, c) = units[u][c];
    }
    return m;
}

ScoredSample scored(std::string claim, std::string ev, std::optional<Stance> stance, double acu) {
    const Eigen::Vector3d flat = Eigen::Vector3d::Constant(1.0 / 3);
    auto s = metrics::score_sample(std::move(claim), std::move(ev), stance,
                                   VerdictProbabilities::from_normalized(flat, Mode::ClaimOnly),
                                   VerdictProbabilities::from_normalized(flat, Mode::ClaimEvidence), AcuForm::Sum, "m", "p");
    s.acu = acu;
    return s;
}

}  // namespace

TEST_CASE("average ranks") {
    const Eigen::VectorXd r = average_ranks(vec({10, 20, 20, 5}));
    CHECK(r(0) == 2.0);
    CHECK(r(1) == 3.5);
    CHECK(r(2) == 3.5);
    CHECK(r(3) == 1.0);
}

TEST_CASE("spearman matches the rank-difference formula without ties") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 3 + rng() % 8;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = u(rng);
            y[i] = u(rng);
        }
        const auto r = spearman(vec(x), vec(y));
        REQUIRE(r.rho);
        CHECK(std::abs(*r.rho - rank_difference_rho(x, y)) <= 1e-12);
        CHECK(r.n == n);
    }
}

TEST_CASE("spearman with ties matches Pearson on averaged ranks") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 3 + rng() % 8;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(rng() % 3);
            y[i] = static_cast<double>(rng() % 4);
        }
        const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                              std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
        if (constant) {
            CHECK_THROWS_AS(spearman(vec(x), vec(y)), DegenerateInput);
            CHECK_FALSE(try_spearman(vec(x), vec(y)).rho);
            continue;
        }
        const auto r = spearman(vec(x), vec(y));
        CHECK(std::abs(*r.rho - pearson_ref(count_ranks(x), count_ranks(y))) <= 1e-12);
    }
}

TEST_CASE("spearman errors and p-values") {
    CHECK_THROWS_AS(spearman(vec({1, 2, 3}), vec({1, 2})), LengthMismatch);
    CHECK_THROWS_AS(spearman(vec({1, 2}), vec({1, 2})), DegenerateInput);
    CHECK(spearman(vec({1, 2, 3, 4}), vec({2, 4, 6, 8})).rho == doctest::Approx(1.0));
    CHECK(spearman(vec({1, 2, 3, 4}), vec({4, 3, 2, 1})).rho == doctest::Approx(-1.0));
    CHECK(spearman_p_t(0.0, 10) == doctest::Approx(1.0));
    // t = 0.5 * sqrt(8 / 0.75) = 1.63299, two-sided p with 8 dof = 0.14107
    CHECK(spearman_p_t(0.5, 10) == doctest::Approx(0.14107).epsilon(1e-4));

    // Exact permutation p-value: perfectly ordered n=4 reaches |rho|=1 in 2 of 24 orders.
    const auto exact = spearman(vec({1, 2, 3, 4}), vec({1, 2, 3, 4}), PValueMethod::Permutation);
    CHECK(*exact.p_value == doctest::Approx(2.0 / 24.0));
    std::vector<double> big(13);
    std::iota(big.begin(), big.end(), 0.0);
    CHECK_THROWS_AS(spearman(vec(big), vec(big), PValueMethod::Permutation), ConfigError);
}

TEST_CASE("krippendorff alpha fixtures") {
    // Two coders, four units, half disagree: Do = 4/8, De = 32/56.
    const std::vector<std::vector<double>> units{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
    CHECK(krippendorff_alpha(matrix(units)) == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(krippendorff_alpha(matrix({{0, 0, 0}, {1, 1, kNaN}, {2, 2, 2}})) == doctest::Approx(1.0));
    CHECK(krippendorff_alpha(matrix({{0, 0, 0}, {1, 1, kNaN}, {2, 2, 2}}), AlphaMetric::Ordinal) ==
          doctest::Approx(1.0));
    CHECK_THROWS_AS(krippendorff_alpha(matrix({{0, kNaN}, {kNaN, 1}})), NoPairableValues);
    CHECK_THROWS_AS(krippendorff_alpha(matrix({{0}, {1}})), NoPairableValues);
}

TEST_CASE("krippendorff alpha matches the pooled-pair oracle") {
    std::mt19937_64 rng(5);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t units = 2 + rng() % 8, coders = 2 + rng() % 3;
        std::vector<std::vector<double>> m(units, std::vector<double>(coders));
        for (auto& row : m) {
            for (auto& v : row) v = rng() % 5 == 0 ? kNaN : static_cast<double>(rng() % 3);
        }
        double ref;
        try {
            ref = alpha_ref(m);
        } catch (...) {
            continue;
        }
        if (!std::isfinite(ref)) continue;
        CHECK(krippendorff_alpha(matrix(m)) == doctest::Approx(ref).epsilon(1e-12));
        ++checked;
    }
    CHECK(checked > 100);
}

TEST_CASE("annotation matrices") {
    EvidencePiece a, b;
    a.annotator_labels = {{Relevance::Relevant, Stance::Refutes}, {std::nullopt, Stance::Supports}};
    b.annotator_labels = {{Relevance::NotRelevant, std::nullopt}};
    const std::vector<EvidencePiece> ev{a, b};
    const auto s = stance_annotations(ev);
    CHECK(s.rows() == 2);
    CHECK(s.cols() == 2);
    CHECK(s(0, 0) == 5.0);
    CHECK(s(0, 1) == 0.0);
    CHECK(std::isnan(s(1, 0)));
    CHECK(std::isnan(s(1, 1)));
    const auto r = relevance_annotations(ev);
    CHECK(r(0, 0) == 1.0);
    CHECK(std::isnan(r(0, 1)));
    CHECK(r(1, 0) == 0.0);
}

TEST_CASE("balanced MAE") {
    using L = Label;
    const std::vector<L> gold{L::True, L::True, L::False}, pred{L::True, L::False, L::False};
    CHECK(balanced_mae(gold, pred) == doctest::Approx(0.5));
    CHECK(balanced_mae(gold, gold) == 0.0);
    CHECK_THROWS_AS(balanced_mae(gold, std::vector<L>{L::True}), LengthMismatch);
    CHECK_THROWS_AS(balanced_mae(std::vector<L>{}, std::vector<L>{}), EmptyInput);

    // Oracle: each gold class contributes its own mean error, averaged over the classes present.
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 12;
        std::vector<L> g(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = kLabels[rng() % 3];
            p[i] = kLabels[rng() % 3];
        }
        double total = 0;
        int classes = 0;
        for (L c : kLabels) {
            double err = 0, count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (g[i] != c) continue;
                err += std::abs(static_cast<int>(g[i]) - static_cast<int>(p[i]));
                ++count;
            }
            if (count > 0) {
                total += err / count;
                ++classes;
            }
        }
        CHECK(balanced_mae(g, p) == doctest::Approx(total / classes).epsilon(1e-12));
    }
}

TEST_CASE("stratified ACU") {
    const std::vector<ScoredSample> s{scored("a", "1", Stance::Refutes, 1.0), scored("a", "2", Stance::Refutes, 0.0),
                                      scored("b", "3", Stance::Supports, -0.5), scored("c", "4", std::nullopt, 9.0)};
    const auto r = stratified_acu(s);
    CHECK(r.n == 3);
    CHECK(r.unlabeled == 1);
    CHECK(*r.strata[5].mean == doctest::Approx(0.5));
    CHECK(*r.strata[5].std == doctest::Approx(0.5));
    CHECK(*r.strata[0].mean == doctest::Approx(-0.5));
    CHECK(*r.strata[0].std == 0.0);
    CHECK(*r.grand_mean == doctest::Approx(0.5 / 3));
    CHECK(r.empty_strata.size() == 4);
    CHECK_FALSE(r.strata[2].mean);

    const auto j = to_json(r);
    CHECK(j["strata"]["refutes"]["n"] == 2);
    CHECK(j["strata"]["insufficient-neutral"]["mean"].is_null());

    auto mixed = s;
    mixed[1].acu_form = AcuForm::Mean;
    CHECK_THROWS_AS(stratified_acu(mixed), InvariantViolation);
}

TEST_CASE("prediction shift counts") {
    using L = Label;
    using S = Stance;
    const std::vector<L> before{L::True, L::None, L::False, L::True};
    const std::vector<L> after{L::False, L::False, L::True, L::None};
    const std::vector<S> st{S::Refutes, S::Refutes, S::Refutes, S::Supports};
    const auto t = prediction_shift(before, after, st);
    const auto& ref = t.rows[5];
    CHECK(ref.n == 3);
    CHECK(ref.desirable == 2);
    CHECK(ref.undesirable == 1);
    CHECK(ref.memory_conflicts == 1);
    CHECK(ref.change == std::array<long, 3>{1, -1, 0});
    CHECK(t.rows[0].undesirable == 1);
    CHECK(t.total == 4);
    CHECK(t.sum_delta_n_d == 0);

    const auto j = to_json(t);
    CHECK(j["rows"]["refutes"]["memory_conflict_percent"].get<double>() == doctest::Approx(100.0 / 3));
    CHECK(j["rows"]["insufficient-neutral"]["memory_conflict_percent"].is_null());
    CHECK_THROWS_AS(prediction_shift(before, after, std::vector<S>{S::Refutes}), LengthMismatch);
}

TEST_CASE("weighted count change is twice the net desirable switches") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = rng() % 40;
        std::vector<Label> a(n), b(n);
        std::vector<Stance> s(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = kLabels[rng() % 3];
            b[i] = kLabels[rng() % 3];
            s[i] = kStances[rng() % 6];
        }
        const auto t = prediction_shift(a, b, s);
        for (const auto& row : t.rows) CHECK(row.weighted_count_change == 2 * row.sum_delta_n_d);
        CHECK(t.weighted_count_change == 2 * t.sum_delta_n_d);
    }
}

TEST_CASE("correlation grid schema") {
    GridDataset d1{"druid", {}, {}}, d2{"cf", {}, {}};
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 30; ++i) {
        const auto id = std::to_string(i);
        d1.scored.push_back(scored("c" + id, "e" + id, kStances[i % 6], u(rng)));
        CharacteristicVector cv;
        cv.claim_id = "c" + id;
        cv.evidence_id = "e" + id;
        cv.jaccard = u(rng);
        cv.claim_len_chars = rng() % 100;
        d1.characteristics.push_back(cv);
    }
    const std::vector<GridDataset> ds{d1, d2};
    const auto grid = correlation_grid(ds, "Llama");
    auto expected_rows = characteristics::summary_rows("Llama");
    expected_rows.pop_back();
    CHECK(grid.rows == expected_rows);
    CHECK(grid.rows.size() == 17);
    CHECK(grid.columns.size() == 12);
    CHECK(grid.columns.front() == "druid/supports");
    CHECK(grid.columns.back() == "cf/refutes");
    REQUIRE(grid.cells.size() == 17);
    for (const auto& row : grid.cells) CHECK(row.size() == 12);
    CHECK(grid.cells[0][0].rho);         // Jaccard varies
    CHECK_FALSE(grid.cells[2][0].rho);   // repeats_claim constant
    CHECK_FALSE(grid.cells[6][0].rho);   // perplexity never measured
    CHECK(grid.cells[6][0].n == 0);
    CHECK_FALSE(grid.cells[0][6].rho);   // empty dataset

    const std::string csv = grid_csv(grid);
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 18);
    CHECK(lines[0].rfind("characteristic,druid/supports,", 0) == 0);
    for (const auto& l : lines) CHECK(std::count(l.begin(), l.end(), ',') == 12);
    CHECK(lines[1].rfind("Jaccard similarity,", 0) == 0);

    const auto j = to_json(grid);
    CHECK(j["cells"].size() == 17 * 12);
}

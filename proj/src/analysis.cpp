#include "ctxuse/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "ctxuse/characteristics.hpp"

namespace ctxuse::analysis {

Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& values) {
    const auto n = values.size();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values(a) < values(b); });
    Eigen::VectorXd ranks(n);
    for (Eigen::Index i = 0; i < n;) {
        Eigen::Index j = i;
        while (j + 1 < n && values(order[j + 1]) == values(order[i])) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (Eigen::Index k = i; k <= j; ++k) ranks(order[k]) = avg;
        i = j + 1;
    }
    return ranks;
}

namespace {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd da = a.array() - a.mean();
    const Eigen::VectorXd db = b.array() - b.mean();
    const double r = da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
    return std::clamp(r, -1.0, 1.0);
}

double permutation_p(const Eigen::VectorXd& rx, const Eigen::VectorXd& ry, double rho) {
    const auto n = rx.size();
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    const Eigen::VectorXd cx = rx.array() - rx.mean();
    const Eigen::VectorXd cy = ry.array() - ry.mean();
    const double norm = std::sqrt(cx.squaredNorm() * cy.squaredNorm());
    const double target = std::abs(rho) - 1e-12;
    std::size_t extreme = 0, total = 0;
    do {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += cx(i) * cy(perm[i]);
        if (std::abs(s / norm) >= target) ++extreme;
        ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace

double spearman_p_t(double rho, std::size_t n) {
    if (n < 3) throw DegenerateInput("p-value needs at least 3 samples");
    if (std::abs(rho) >= 1.0) return 0.0;
    const double df = static_cast<double>(n - 2);
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    boost::math::students_t dist(df);
    return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

CorrelationResult spearman(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                           PValueMethod method) {
    if (x.size() != y.size()) throw LengthMismatch("spearman inputs differ in length");
    const auto n = static_cast<std::size_t>(x.size());
    if (n < 3) throw DegenerateInput("spearman needs at least 3 samples");
    if (!x.allFinite() || !y.allFinite()) throw DegenerateInput("spearman inputs must be finite");
    if ((x.array() == x(0)).all() || (y.array() == y(0)).all()) {
        throw DegenerateInput("spearman input is constant");
    }
    const Eigen::VectorXd rx = average_ranks(x);
    const Eigen::VectorXd ry = average_ranks(y);
    CorrelationResult r;
    r.n = n;
    r.rho = pearson(rx, ry);
    if (method == PValueMethod::Permutation) {
        if (n > 12) throw ConfigError("exact permutation p-values are limited to n <= 12");
        r.p_value = permutation_p(rx, ry, *r.rho);
    } else {
        r.p_value = spearman_p_t(*r.rho, n);
    }
    r.significant = *r.p_value < kSignificance;
    return r;
}

CorrelationResult try_spearman(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                               std::string name, std::string stratum) {
    CorrelationResult r;
    try {
        r = spearman(x, y);
    } catch (const DegenerateInput&) {
        r.n = static_cast<std::size_t>(x.size());
    }
    r.name = std::move(name);
    r.stratum = std::move(stratum);
    return r;
}

// ---------------------------------------------------------------------------

double krippendorff_alpha(const Eigen::Ref<const Eigen::MatrixXd>& annotations, AlphaMetric metric) {
    if (annotations.cols() < 2) throw NoPairableValues("agreement needs at least two coders");

    std::vector<double> categories;
    for (Eigen::Index u = 0; u < annotations.rows(); ++u) {
        for (Eigen::Index c = 0; c < annotations.cols(); ++c) {
            if (!std::isnan(annotations(u, c))) categories.push_back(annotations(u, c));
        }
    }
    std::sort(categories.begin(), categories.end());
    categories.erase(std::unique(categories.begin(), categories.end()), categories.end());
    const auto k = static_cast<Eigen::Index>(categories.size());
    auto index_of = [&](double v) {
        return static_cast<Eigen::Index>(std::lower_bound(categories.begin(), categories.end(), v) - categories.begin());
    };

    Eigen::MatrixXd coincidence = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index u = 0; u < annotations.rows(); ++u) {
        std::vector<Eigen::Index> values;
        for (Eigen::Index c = 0; c < annotations.cols(); ++c) {
            if (!std::isnan(annotations(u, c))) values.push_back(index_of(annotations(u, c)));
        }
        const auto m = values.size();
        if (m < 2) continue;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (i != j) coincidence(values[i], values[j]) += 1.0 / static_cast<double>(m - 1);
            }
        }
    }
    const Eigen::VectorXd marginals = coincidence.rowwise().sum();
    const double n = marginals.sum();
    if (n == 0.0) throw NoPairableValues("no unit carries two or more labels");

    Eigen::MatrixXd delta2(k, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        for (Eigen::Index d = 0; d < k; ++d) {
            if (metric == AlphaMetric::Nominal) {
                delta2(c, d) = c == d ? 0.0 : 1.0;
            } else {
                const auto lo = std::min(c, d), hi = std::max(c, d);
                const double span = marginals.segment(lo, hi - lo + 1).sum() - (marginals(c) + marginals(d)) / 2.0;
                delta2(c, d) = span * span;
            }
        }
    }
    const double observed = (coincidence.array() * delta2.array()).sum() / n;
    const double expected = (marginals * marginals.transpose()).cwiseProduct(delta2).sum() / (n * (n - 1.0));
    if (expected == 0.0) return 1.0;  // a single category in use: nothing to disagree on
    return 1.0 - observed / expected;
}

namespace {

template <typename F>
Eigen::MatrixXd annotation_matrix(std::span<const EvidencePiece> evidence, F&& code) {
    std::size_t coders = 0;
    for (const auto& e : evidence) coders = std::max(coders, e.annotator_labels.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(evidence.size()),
                                                  static_cast<Eigen::Index>(coders),
                                                  std::numeric_limits<double>::quiet_NaN());
    for (std::size_t u = 0; u < evidence.size(); ++u) {
        const auto& labels = evidence[u].annotator_labels;
        for (std::size_t c = 0; c < labels.size(); ++c) {
            if (auto v = code(labels[c])) m(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(c)) = *v;
        }
    }
    return m;
}

}  // namespace

Eigen::MatrixXd stance_annotations(std::span<const EvidencePiece> evidence) {
    return annotation_matrix(evidence, [](const AnnotatorLabel& l) -> std::optional<double> {
        if (!l.stance) return std::nullopt;
        return static_cast<double>(static_cast<int>(*l.stance));
    });
}

Eigen::MatrixXd relevance_annotations(std::span<const EvidencePiece> evidence) {
    return annotation_matrix(evidence, [](const AnnotatorLabel& l) -> std::optional<double> {
        if (!l.relevance) return std::nullopt;
        return *l.relevance == Relevance::Relevant ? 1.0 : 0.0;
    });
}

// ---------------------------------------------------------------------------

StratifiedAcu stratified_acu(std::span<const ScoredSample> scored) {
    StratifiedAcu out;
    std::array<std::vector<double>, 6> values;
    double total = 0.0;
    std::optional<AcuForm> form;
    for (const auto& s : scored) {
        if (form && *form != s.acu_form) throw InvariantViolation("acu_form", "mixed ACU forms in one analysis");
        form = s.acu_form;
        if (!s.stance) {
            ++out.unlabeled;
            continue;
        }
        values[static_cast<int>(*s.stance)].push_back(s.acu);
        total += s.acu;
        ++out.n;
    }
    for (Stance st : kStances) {
        auto& row = out.strata[static_cast<int>(st)];
        const auto& xs = values[static_cast<int>(st)];
        row.stance = st;
        row.n = xs.size();
        if (xs.empty()) {
            out.empty_strata.push_back(st);
            continue;
        }
        const Eigen::Map<const Eigen::VectorXd> v(xs.data(), static_cast<Eigen::Index>(xs.size()));
        row.mean = v.mean();
        row.std = std::sqrt((v.array() - *row.mean).square().mean());
    }
    if (out.n) out.grand_mean = total / static_cast<double>(out.n);
    return out;
}

Json to_json(const StratifiedAcu& s) {
    Json strata = Json::object();
    for (const auto& row : s.strata) {
        strata[std::string(to_string(row.stance))] = Json{{"n", row.n},
                                                          {"mean", row.mean ? Json(*row.mean) : Json()},
                                                          {"std", row.std ? Json(*row.std) : Json()}};
    }
    Json empty = Json::array();
    for (auto st : s.empty_strata) empty.push_back(std::string(to_string(st)));
    return Json{{"strata", strata},
                {"grand_mean", s.grand_mean ? Json(*s.grand_mean) : Json()},
                {"n", s.n},
                {"unlabeled", s.unlabeled},
                {"empty_strata", empty}};
}

// ---------------------------------------------------------------------------

ShiftTable prediction_shift(std::span<const Label> claim_only, std::span<const Label> with_evidence,
                            std::span<const Stance> stances, const metrics::DesirabilityTable& table) {
    if (claim_only.size() != with_evidence.size() || claim_only.size() != stances.size()) {
        throw LengthMismatch("prediction_shift inputs differ in length");
    }
    ShiftTable t;
    for (Stance st : kStances) t.rows[static_cast<int>(st)].stance = st;
    for (std::size_t i = 0; i < stances.size(); ++i) {
        auto& row = t.rows[static_cast<int>(stances[i])];
        const auto a = claim_only[i], b = with_evidence[i];
        ++row.n;
        ++row.claim_only[static_cast<int>(a)];
        ++row.with_evidence[static_cast<int>(b)];
        const int da = table(a, stances[i]), db = table(b, stances[i]);
        if (db > da) ++row.desirable;
        if (db < da) ++row.undesirable;
        row.memory_conflicts += metrics::memory_conflict(a, stances[i]);
    }
    for (auto& row : t.rows) {
        for (Label l : kLabels) {
            const int i = static_cast<int>(l);
            row.change[i] = static_cast<long>(row.with_evidence[i]) - static_cast<long>(row.claim_only[i]);
            row.weighted_count_change += table(l, row.stance) * row.change[i];
        }
        row.sum_delta_n_d = static_cast<long>(row.desirable) - static_cast<long>(row.undesirable);
        t.total += row.n;
        t.sum_delta_n_d += row.sum_delta_n_d;
        t.weighted_count_change += row.weighted_count_change;
    }
    return t;
}

Json to_json(const ShiftTable& t) {
    Json rows = Json::object();
    auto per_label = [](const auto& arr) {
        Json j = Json::object();
        for (Label l : kLabels) j[std::string(to_string(l))] = arr[static_cast<int>(l)];
        return j;
    };
    for (const auto& row : t.rows) {
        rows[std::string(to_string(row.stance))] =
            Json{{"n", row.n},
                 {"claim_only", per_label(row.claim_only)},
                 {"with_evidence", per_label(row.with_evidence)},
                 {"change", per_label(row.change)},
                 {"desirable_switches", row.desirable},
                 {"undesirable_switches", row.undesirable},
                 {"sum_delta_n_d", row.sum_delta_n_d},
                 {"weighted_count_change", row.weighted_count_change},
                 {"memory_conflicts", row.memory_conflicts},
                 {"memory_conflict_percent", row.n ? Json(100.0 * row.memory_conflicts / row.n) : Json()}};
    }
    return Json{{"rows", rows},
                {"total", t.total},
                {"sum_delta_n_d", t.sum_delta_n_d},
                {"weighted_count_change", t.weighted_count_change}};
}

// ---------------------------------------------------------------------------

double balanced_mae(std::span<const Label> gold, std::span<const Label> pred, const LabelEncoding& encoding) {
    if (gold.size() != pred.size()) throw LengthMismatch("balanced_mae inputs differ in length");
    if (gold.empty()) throw EmptyInput("balanced_mae of no samples");
    std::array<std::size_t, 3> freq{};
    for (auto g : gold) ++freq[static_cast<int>(g)];
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        // n / (k * n_class); the constant n / k cancels in the weighted mean.
        const double w = 1.0 / static_cast<double>(freq[static_cast<int>(gold[i])]);
        num += w * std::abs(encoding[static_cast<int>(gold[i])] - encoding[static_cast<int>(pred[i])]);
        den += w;
    }
    return num / den;
}

// ---------------------------------------------------------------------------

std::optional<double> characteristic_value(const CharacteristicVector& v, std::size_t row) {
    auto flag = [](bool b) { return std::optional<double>(b ? 1.0 : 0.0); };
    switch (row) {
        case 0: return v.jaccard;
        case 1: return v.claim_evidence_overlap;
        case 2: return flag(v.repeats_claim);
        case 3: return v.flesch;
        case 4: return static_cast<double>(v.claim_len_chars);
        case 5: return static_cast<double>(v.evidence_len_chars);
        case 6: return v.perplexity;
        case 7: return v.entity_overlap;
        case 8: return v.refers_external ? flag(*v.refers_external) : std::nullopt;
        case 9:
            if (v.unreliable == Reliability::Unknown) return std::nullopt;
            return flag(v.unreliable == Reliability::Unreliable);
        case 10: return flag(v.hedging);
        case 11: return flag(v.hedging_discourse);
        case 12: return flag(v.contains_true_word);
        case 13: return flag(v.contains_false_word);
        case 14: return flag(v.fact_check_source);
        case 15: return flag(v.gold_source);
        case 16: return v.pub_after_claim ? flag(*v.pub_after_claim) : std::nullopt;
        default: return std::nullopt;
    }
}

CorrelationGrid correlation_grid(std::span<const GridDataset> datasets, const std::string& perplexity_model) {
    CorrelationGrid grid;
    grid.rows = characteristics::summary_rows(perplexity_model);
    grid.rows.pop_back();  // "Total instances" is a count, not a characteristic

    for (const auto& ds : datasets) {
        for (Stance st : kStances) grid.columns.push_back(ds.name + "/" + std::string(to_string(st)));
    }
    grid.cells.assign(grid.rows.size(), {});

    for (const auto& ds : datasets) {
        std::map<std::pair<std::string, std::string>, const CharacteristicVector*> by_pair;
        for (const auto& cv : ds.characteristics) by_pair[{cv.claim_id, cv.evidence_id}] = &cv;

        for (Stance st : kStances) {
            const std::string column = ds.name + "/" + std::string(to_string(st));
            std::vector<std::pair<const ScoredSample*, const CharacteristicVector*>> members;
            for (const auto& s : ds.scored) {
                if (s.stance != st) continue;
                auto it = by_pair.find({s.claim_id, s.evidence_id});
                if (it != by_pair.end()) members.emplace_back(&s, it->second);
            }
            for (std::size_t row = 0; row < grid.rows.size(); ++row) {
                std::vector<double> xs, ys;
                for (const auto& [s, cv] : members) {
                    if (auto v = characteristic_value(*cv, row)) {
                        xs.push_back(*v);
                        ys.push_back(s->acu);
                    }
                }
                const Eigen::Map<const Eigen::VectorXd> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
                const Eigen::Map<const Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
                grid.cells[row].push_back(try_spearman(x, y, grid.rows[row], column));
            }
        }
    }
    return grid;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string grid_csv(const CorrelationGrid& grid) {
    std::ostringstream out;
    out << "characteristic";
    for (const auto& c : grid.columns) out << ',' << csv_field(c);
    out << '\n';
    out.setf(std::ios::fixed);
    out.precision(4);
    for (std::size_t r = 0; r < grid.rows.size(); ++r) {
        out << csv_field(grid.rows[r]);
        for (const auto& cell : grid.cells[r]) {
            out << ',';
            if (cell.rho) out << *cell.rho << (cell.significant ? "*" : "");
        }
        out << '\n';
    }
    return out.str();
}

Json to_json(const CorrelationResult& r) {
    return Json{{"name", r.name},
                {"stratum", r.stratum},
                {"rho", r.rho ? Json(*r.rho) : Json()},
                {"p_value", r.p_value ? Json(*r.p_value) : Json()},
                {"n", r.n},
                {"significant", r.significant}};
}

Json to_json(const CorrelationGrid& grid) {
    Json cells = Json::array();
    for (const auto& row : grid.cells) {
        for (const auto& cell : row) cells.push_back(to_json(cell));
    }
    return Json{{"rows", grid.rows}, {"columns", grid.columns}, {"cells", cells}};
}

}  // namespace ctxuse::analysis

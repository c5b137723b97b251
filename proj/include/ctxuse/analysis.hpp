#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctxuse/metrics.hpp"
#include "ctxuse/model.hpp"

namespace ctxuse::analysis {

// ---------------------------------------------------------------------------
// Rank correlation

inline constexpr double kSignificance = 0.05;

struct CorrelationResult {
    std::string name;
    std::string stratum;
    std::optional<double> rho;
    std::optional<double> p_value;
    std::size_t n = 0;
    bool significant = false;
};

enum class PValueMethod { TApprox, Permutation };

/// 1-based ranks; tied values share the mean of the ranks they span.
Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Pearson correlation of the average ranks. Throws LengthMismatch,
/// DegenerateInput for n < 3 or a constant input. The exact permutation
/// p-value is limited to n <= 12.
CorrelationResult spearman(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                           PValueMethod method = PValueMethod::TApprox);

/// As spearman, but a degenerate input yields a result with rho absent.
CorrelationResult try_spearman(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                               std::string name = {}, std::string stratum = {});

/// Two-sided p-value of rho under H0 via Student's t with n - 2 dof.
double spearman_p_t(double rho, std::size_t n);

// ---------------------------------------------------------------------------
// Agreement

enum class AlphaMetric { Nominal, Ordinal };

/// Units x coders; NaN marks a missing label. Values are category codes.
double krippendorff_alpha(const Eigen::Ref<const Eigen::MatrixXd>& annotations,
                          AlphaMetric metric = AlphaMetric::Nominal);

/// Stance codes (Stance enum order) of every annotator, padded with NaN.
Eigen::MatrixXd stance_annotations(std::span<const EvidencePiece> evidence);
/// Relevance codes (relevant = 1, not relevant = 0), padded with NaN.
Eigen::MatrixXd relevance_annotations(std::span<const EvidencePiece> evidence);

// ---------------------------------------------------------------------------
// Stratified ACU

struct StratumStats {
    Stance stance;
    std::size_t n = 0;
    std::optional<double> mean;
    std::optional<double> std;  // population
};

struct StratifiedAcu {
    std::array<StratumStats, 6> strata;  // Stance enum order
    std::optional<double> grand_mean;
    std::size_t n = 0;
    std::size_t unlabeled = 0;  // samples without a stance
    std::vector<Stance> empty_strata;
};

StratifiedAcu stratified_acu(std::span<const ScoredSample> scored);
Json to_json(const StratifiedAcu& s);

// ---------------------------------------------------------------------------
// Prediction shift

struct ShiftRow {
    Stance stance;
    std::size_t n = 0;
    std::array<std::size_t, 3> claim_only{};     // per predicted label, (False, None, True)
    std::array<std::size_t, 3> with_evidence{};
    std::array<long, 3> change{};                // with_evidence - claim_only
    std::size_t desirable = 0;
    std::size_t undesirable = 0;
    long sum_delta_n_d = 0;                      // desirable - undesirable switches
    long weighted_count_change = 0;              // sum over labels of D(label) * change
    std::size_t memory_conflicts = 0;
};

struct ShiftTable {
    std::array<ShiftRow, 6> rows;  // Stance enum order
    std::size_t total = 0;
    long sum_delta_n_d = 0;
    long weighted_count_change = 0;
};

/// A switch a -> b counts as desirable when D(b, stance) > D(a, stance) and
/// undesirable when D(b, stance) < D(a, stance).
ShiftTable prediction_shift(std::span<const Label> claim_only, std::span<const Label> with_evidence,
                            std::span<const Stance> stances, const metrics::DesirabilityTable& table = {});
Json to_json(const ShiftTable& t);

// ---------------------------------------------------------------------------
// Prompt scoring

using LabelEncoding = std::array<double, 3>;  // value for (False, None, True)
inline constexpr LabelEncoding kDefaultEncoding{0.0, 1.0, 2.0};

/// Mean absolute error with per-sample weights inversely proportional to the
/// frequency of the sample's gold class.
double balanced_mae(std::span<const Label> gold, std::span<const Label> pred,
                    const LabelEncoding& encoding = kDefaultEncoding);

// ---------------------------------------------------------------------------
// Characteristic x ACU correlation grid

struct GridDataset {
    std::string name;
    std::vector<ScoredSample> scored;
    std::vector<CharacteristicVector> characteristics;
};

struct CorrelationGrid {
    std::vector<std::string> rows;     // characteristic names
    std::vector<std::string> columns;  // "<dataset>/<stance>"
    std::vector<std::vector<CorrelationResult>> cells;  // [row][column]
};

/// Numeric value of one characteristic row, or nullopt when not measured.
std::optional<double> characteristic_value(const CharacteristicVector& v, std::size_t row);

CorrelationGrid correlation_grid(std::span<const GridDataset> datasets, const std::string& perplexity_model = {});
std::string grid_csv(const CorrelationGrid& grid);
Json to_json(const CorrelationGrid& grid);
Json to_json(const CorrelationResult& r);

}  // namespace ctxuse::analysis

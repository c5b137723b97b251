#pragma once

#include <span>
#include <type_traits>

#include <Eigen/Core>

#include "ctxuse/errors.hpp"
#include "ctxuse/model.hpp"

namespace ctxuse::metrics {

/// Rescaled probability change of one verdict token together with a flag for
/// the 0/0 case (baseline and conditioned probability both exactly 1).
template <typename Scalar>
struct DeltaP {
    Scalar value;
    bool degenerate;
};

/// Increases are scaled by the head-room above the baseline, decreases by the
/// baseline itself, so the result always lies in [-1, 1].
template <typename Scalar>
DeltaP<Scalar> delta_p(Scalar p_with, Scalar p_without) {
    static_assert(std::is_floating_point_v<Scalar>);
    if (!(p_with >= 0 && p_with <= 1) || !(p_without >= 0 && p_without <= 1)) {
        throw InvariantViolation("probability", "delta_p inputs must lie in [0,1]");
    }
    if (p_with >= p_without) {
        const Scalar headroom = Scalar(1) - p_without;
        if (headroom == Scalar(0)) return {Scalar(0), true};
        return {(p_with - p_without) / headroom, false};
    }
    return {(p_with - p_without) / p_without, false};
}

/// Component-wise rescaled change over a (False, None, True) triple.
template <typename DerivedWith, typename DerivedWithout>
Eigen::Matrix<typename DerivedWith::Scalar, 3, 1> delta_p(const Eigen::MatrixBase<DerivedWith>& with,
                                                          const Eigen::MatrixBase<DerivedWithout>& without,
                                                          bool* degenerate = nullptr) {
    EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(DerivedWith, 3);
    EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(DerivedWithout, 3);
    using Scalar = typename DerivedWith::Scalar;
    Eigen::Matrix<Scalar, 3, 1> out;
    bool any = false;
    for (int i = 0; i < 3; ++i) {
        const auto d = delta_p<Scalar>(with(i), without(i));
        out(i) = d.value;
        any = any || d.degenerate;
    }
    if (degenerate) *degenerate = any;
    return out;
}

/// Desirable direction of change, +1 or -1, for each (label, stance) cell.
/// Rows follow the label order (False, None, True), columns the Stance enum.
class DesirabilityTable {
public:
    using Matrix = Eigen::Matrix<int, 3, 6>;

    DesirabilityTable();
    explicit DesirabilityTable(const Matrix& signs);

    int operator()(Label label, Stance stance) const {
        return signs_(static_cast<int>(label), static_cast<int>(stance));
    }
    /// Column of signs for one stance, as a (False, None, True) vector.
    Eigen::Vector3d column(Stance stance) const {
        return signs_.col(static_cast<int>(stance)).cast<double>();
    }
    const Matrix& matrix() const { return signs_; }

private:
    Matrix signs_;
};

inline DesirabilityTable::DesirabilityTable() {
    // Columns: supports, insufficient-supports, insufficient-neutral,
    //          insufficient-contradictory, insufficient-refutes, refutes.
    signs_ << -1, -1, -1, -1, +1, +1,   // False
              -1, +1, +1, +1, +1, -1,   // None
              +1, +1, -1, -1, -1, -1;   // True
}

inline DesirabilityTable::DesirabilityTable(const Matrix& signs) : signs_(signs) {
    if (((signs_.array() != 1) && (signs_.array() != -1)).any()) {
        throw InvariantViolation("desirability", "entries must be +1 or -1");
    }
}

inline int desirability(Label label, Stance stance, const DesirabilityTable& table = {}) {
    return table(label, stance);
}

inline double acu_scale(AcuForm form) { return form == AcuForm::Mean ? 1.0 / 3.0 : 1.0; }

/// Accumulated context usage from an already computed delta triple.
template <typename Derived>
typename Derived::Scalar acu_from_delta(const Eigen::MatrixBase<Derived>& delta, Stance stance,
                                        AcuForm form, const DesirabilityTable& table = {}) {
    using Scalar = typename Derived::Scalar;
    return static_cast<Scalar>(acu_scale(form)) * table.column(stance).template cast<Scalar>().dot(delta);
}

/// Signed sum of rescaled changes over the three verdict tokens; the mean form
/// divides by |T| = 3. Triples need not be normalised.
template <typename DerivedWithout, typename DerivedWith>
typename DerivedWith::Scalar acu(const Eigen::MatrixBase<DerivedWithout>& without,
                                 const Eigen::MatrixBase<DerivedWith>& with, Stance stance, AcuForm form,
                                 const DesirabilityTable& table = {}, bool* degenerate = nullptr) {
    return acu_from_delta(delta_p(with, without, degenerate), stance, form, table);
}

inline double acu(const VerdictProbabilities& without, const VerdictProbabilities& with, Stance stance,
                  AcuForm form, const DesirabilityTable& table = {}, bool* degenerate = nullptr) {
    return acu(without.vector(), with.vector(), stance, form, table, degenerate);
}

/// Builds the scored record for one (claim, evidence) pair.
ScoredSample score_sample(std::string claim_id, std::string evidence_id, std::optional<Stance> stance,
                          const VerdictProbabilities& without, const VerdictProbabilities& with,
                          AcuForm form, std::string model_id, std::string prompt_id,
                          const DesirabilityTable& table = {});

/// Parametric (claim-only) prediction opposed by decisive evidence. None
/// predictions and insufficient stances never conflict.
inline bool memory_conflict(Label parametric_prediction, Stance stance) {
    return (parametric_prediction == Label::True && stance == Stance::Refutes) ||
           (parametric_prediction == Label::False && stance == Stance::Supports);
}

/// A claim with at least one supporting and one refuting evidence piece.
bool inter_context_conflict(std::span<const EvidencePiece* const> evidences);
bool inter_context_conflict(std::span<const Stance> stances);
/// Checked form: every evidence piece must reference `claim_id`.
bool inter_context_conflict(std::string_view claim_id, std::span<const EvidencePiece> evidences);

}  // namespace ctxuse::metrics

#include "ctxuse/metrics.hpp"

#include <algorithm>

namespace ctxuse::metrics {

ScoredSample score_sample(std::string claim_id, std::string evidence_id, std::optional<Stance> stance,
                          const VerdictProbabilities& without, const VerdictProbabilities& with,
                          AcuForm form, std::string model_id, std::string prompt_id,
                          const DesirabilityTable& table) {
    bool degenerate = false;
    const Eigen::Vector3d delta = delta_p(with.vector(), without.vector(), &degenerate);
    return ScoredSample{
        .claim_id = std::move(claim_id),
        .evidence_id = std::move(evidence_id),
        .stance = stance,
        .probs_without = without,
        .probs_with = with,
        .delta_p = delta,
        .acu = stance ? acu_from_delta(delta, *stance, form, table) : 0.0,
        .acu_form = form,
        .degenerate = degenerate,
        .model_id = std::move(model_id),
        .prompt_id = std::move(prompt_id),
    };
}

bool inter_context_conflict(std::span<const Stance> stances) {
    const bool supports = std::find(stances.begin(), stances.end(), Stance::Supports) != stances.end();
    const bool refutes = std::find(stances.begin(), stances.end(), Stance::Refutes) != stances.end();
    return supports && refutes;
}

bool inter_context_conflict(std::span<const EvidencePiece* const> evidences) {
    std::vector<Stance> stances;
    for (const auto* e : evidences) {
        if (e->stance) stances.push_back(*e->stance);
    }
    return inter_context_conflict(std::span<const Stance>(stances));
}

bool inter_context_conflict(std::string_view claim_id, std::span<const EvidencePiece> evidences) {
    std::vector<const EvidencePiece*> refs;
    for (const auto& e : evidences) {
        if (e.claim_id != claim_id) {
            throw InvariantViolation("claim_id", "evidence " + e.id + " belongs to another claim");
        }
        refs.push_back(&e);
    }
    return inter_context_conflict(std::span<const EvidencePiece* const>(refs));
}

}  // namespace ctxuse::metrics

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "metatopic/assignment.hpp"
#include "metatopic/geometry.hpp"
#include "metatopic/hyper.hpp"
#include "metatopic/rng.hpp"

namespace metatopic {

// Streaming distributed state. Between steps, global_thetas holds the
// anchors theta^(t-1) and group_popularity the per-group appearance counts
// through t. During a step, slots split into anchored topics (always
// matchable) and topics born this step (matchable once another group supports
// them); the step_* fields carry the in-progress assignment.
struct SddmState {
    std::vector<UnitDirection> global_thetas;
    std::vector<std::vector<int>> group_popularity;  // [j][i]
    int t = 0;
    int group_count = 0;
    ModelHyperparams hyper;
    bool converged = true;
    int sweeps_used = 0;

    // within-step scratch; anchored slots are [0, anchored_count), born slots
    // follow
    std::size_t anchored_count = 0;
    std::vector<Vec> step_resultants;  // per slot, sum of estimates assigned this step
    std::vector<int> step_support;
    std::vector<std::vector<int>> step_assign;  // [j][k] -> slot, -1 unassigned
};

// Prepares the step scratch for matching timestep state.t + 1.
void sddm_begin_step(SddmState& state, const std::vector<std::vector<UnitDirection>>& estimates_per_group);

void sddm_detach_group(SddmState& state, int j, std::span<const UnitDirection> estimates_j);

// Slots eligible as existing rows for group j's matching: every anchored
// topic plus born-this-step topics currently supported by another group.
std::vector<int> sddm_live_rows(const SddmState& state);

// Anchored row i scores |tau1 v + tau1 R_i + tau0 theta_i| - |tau1 R_i +
// tau0 theta_i| + log((1+m_ji)/(t - m_ji)). Rows born this step have no
// popularity history; they drop the anchor term and carry the static-matcher
// odds log(m/(J - m)) over their current-step support, the increment of the
// step's shared objective. New rows score tau1 + log(gamma0/J) - log(j').
// Requires leave-one-out step state for group j.
CostMatrix sddm_group_cost(const SddmState& state, int j, std::span<const UnitDirection> estimates_j);

struct SddmSweepEvent {
    int sweep = 0;
    int group = 0;
    const CostMatrix& cost;
    const AssignmentSolution& solution;
};
using SddmObserver = std::function<void(const SddmSweepEvent&)>;

bool sddm_sweep_group(SddmState& state, int j, std::span<const UnitDirection> estimates_j,
                      const SddmObserver& observer = {}, int sweep_index = 1);

struct SddmStepInfo {
    int matched = 0;   // estimates matched to anchored topics
    int created = 0;   // topics born this step (surviving)
    int dormant = 0;   // anchored topics with no support this step
    int sweeps = 0;
    bool converged = true;
};

// One timestep: sweeps groups in seeded random order until the assignments
// reach a fixed point, then applies the MAP updates (anchored matched ->
// normalized tau1 R + tau0 theta_old; born -> normalized resultant; dormant
// -> unchanged) and advances the popularity counts and t.
SddmStepInfo sddm_step(SddmState& state,
                       const std::vector<std::vector<UnitDirection>>& estimates_per_group,
                       Rng& rng, int max_sweeps = 100, const SddmObserver& observer = {});

}  // namespace metatopic

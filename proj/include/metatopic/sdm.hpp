#pragma once

#include <span>
#include <utility>
#include <vector>

#include "metatopic/assignment.hpp"
#include "metatopic/geometry.hpp"
#include "metatopic/hyper.hpp"

namespace metatopic {

// One global topic's streaming state: current direction, appearance count,
// and optionally retained per-step snapshots.
struct GlobalTopicTrajectory {
    UnitDirection theta;
    int popularity = 1;  // timesteps where the topic appeared
    int born_at = 1;
    std::vector<std::pair<int, UnitDirection>> history;
};

struct SdmState {
    std::vector<GlobalTopicTrajectory> trajectories;  // index = topic identity
    int t = 0;                                        // last completed timestep
    ModelHyperparams hyper;
    ReferencePoint ref;        // maintained by the pipeline, unused in matching
    bool keep_history = false;
};

struct SdmStepInfo {
    int matched = 0;   // estimates matched to existing topics
    int created = 0;   // new topics born
    int dormant = 0;   // existing topics left untouched
};

// Cost for matching timestep t = state.t + 1: existing row i scores
// |tau1 v + tau0 theta_i| - tau0 + log odds(m_i); new row j scores
// tau1 + log(gamma0/t) - log(j).
CostMatrix sdm_cost(const SdmState& state, std::span<const UnitDirection> estimates);

// One streaming step: build the cost, solve the matching, apply the MAP
// updates. Matched topics move to the normalized weighted resultant, matched
// new rows become fresh trajectories, unmatched topics stay put.
SdmStepInfo sdm_step(SdmState& state, std::span<const UnitDirection> estimates);

// Log posterior of one step up to constants independent of (theta, B).
// col_to_row encodes B: estimate k sits in row col_to_row[k]; rows below
// prev_thetas.size() are existing topics, the rest are new ones in birth
// order. new_thetas holds all L_t directions after the step.
double sdm_objective(std::span<const UnitDirection> prev_thetas,
                     std::span<const UnitDirection> new_thetas,
                     const std::vector<std::size_t>& col_to_row,
                     std::span<const UnitDirection> estimates,
                     std::span<const int> m_counts, int t,
                     const ModelHyperparams& hyper);

}  // namespace metatopic

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "metatopic/assignment.hpp"
#include "metatopic/geometry.hpp"
#include "metatopic/hyper.hpp"
#include "metatopic/rng.hpp"

namespace metatopic {

// Shared-polytope state for a single time point across J groups. Each global
// topic caches the unnormalized resultant of its assigned estimates; theta is
// that resultant normalized.
struct DmState {
    std::vector<UnitDirection> global_thetas;
    std::vector<Vec> resultants;
    std::vector<int> support;                         // m_i: assignments per topic
    std::vector<std::vector<int>> group_assignments;  // [j][k] -> topic index, -1 unassigned
    int group_count = 0;
    ModelHyperparams hyper;
    bool converged = true;
    int sweeps_used = 0;
};

// Removes group j's assignments from the resultants (leave-one-out state).
void dm_detach_group(DmState& state, int j, std::span<const UnitDirection> estimates_j);

// Topic indices eligible as existing rows for a sweep, in index order
// (support > 0 after leave-one-out).
std::vector<int> dm_live_rows(const DmState& state);

// Cost for re-assigning group j given everyone else, with a configurable
// popularity horizon (J for regular sweeps; the 1-based position during the
// sequential initialization pass). Requires leave-one-out state for j.
CostMatrix dm_group_cost_at_horizon(const DmState& state, int j,
                                    std::span<const UnitDirection> estimates_j, int horizon);
CostMatrix dm_group_cost(const DmState& state, int j, std::span<const UnitDirection> estimates_j);

struct DmSweepEvent {
    int sweep = 0;  // 0 during the initialization pass
    int group = 0;
    const CostMatrix& cost;
    const AssignmentSolution& solution;
    bool changed = false;
    int topics_after = 0;
};
using DmObserver = std::function<void(const DmSweepEvent&)>;

// Re-solves group j: detach, match, install. New topics fill slots vacated
// during this sweep before growing the topic list, which keeps indices stable
// at a fixed point; topics left with no support are deleted and indices
// compacted. Returns whether j's assignment changed.
bool dm_sweep(DmState& state, int j, std::span<const UnitDirection> estimates_j,
              const DmObserver& observer = {}, int sweep_index = 0);

// Full solve: one sequential pass over a seeded random permutation of groups
// (position p plays the role of the time horizon), then repeated sweeps in
// fresh random orders until no assignment moves or max_sweeps is hit.
DmState dm_run(const std::vector<std::vector<UnitDirection>>& groups,
               const ModelHyperparams& hyper, Rng& rng, int max_sweeps = 100,
               const DmObserver& observer = {});

}  // namespace metatopic

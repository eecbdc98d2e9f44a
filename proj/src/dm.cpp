#include "metatopic/dm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace metatopic {

void dm_detach_group(DmState& state, int j, std::span<const UnitDirection> estimates_j) {
    auto& assign = state.group_assignments[static_cast<std::size_t>(j)];
    for (std::size_t k = 0; k < assign.size(); ++k) {
        const int i = assign[k];
        if (i < 0) continue;
        axpy(-1.0, estimates_j[k].coords(), state.resultants[static_cast<std::size_t>(i)]);
        state.support[static_cast<std::size_t>(i)] -= 1;
        assign[k] = -1;
    }
}

std::vector<int> dm_live_rows(const DmState& state) {
    std::vector<int> live;
    for (std::size_t i = 0; i < state.support.size(); ++i)
        if (state.support[i] > 0) live.push_back(static_cast<int>(i));
    return live;
}

CostMatrix dm_group_cost_at_horizon(const DmState& state, int j,
                                    std::span<const UnitDirection> estimates_j, int horizon) {
    (void)j;
    const auto& h = state.hyper;
    const std::vector<int> live = dm_live_rows(state);
    const std::size_t L = live.size();
    const std::size_t K = estimates_j.size();
    const std::size_t n_new = static_cast<std::size_t>(h.new_rows(static_cast<int>(L), static_cast<int>(K)));

    CostMatrix cost(L + n_new, K);
    for (std::size_t a = 0; a < L; ++a) {
        const auto i = static_cast<std::size_t>(live[a]);
        const Vec& res = state.resultants[i];
        const double res_norm = norm2(res);
        const int mc = h.capped_count(state.support[i]);
        const double odds = h.prior_log_odds(static_cast<double>(mc), mc, horizon);
        for (std::size_t k = 0; k < K; ++k) {
            Vec sum = res;
            axpy(1.0, estimates_j[k].coords(), sum);
            cost.at(a, k) = h.tau1 * norm2(sum) - h.tau1 * res_norm + odds;
        }
    }
    for (std::size_t jj = 1; jj <= n_new; ++jj) {
        const double val = h.tau1 + std::log(h.gamma0 / horizon) - std::log(static_cast<double>(jj));
        for (std::size_t k = 0; k < K; ++k) cost.at(L + jj - 1, k) = val;
    }
    return cost;
}

CostMatrix dm_group_cost(const DmState& state, int j, std::span<const UnitDirection> estimates_j) {
    return dm_group_cost_at_horizon(state, j, estimates_j, state.group_count);
}

namespace {

// Install group j's solved assignment: existing rows add to their topic, new
// rows claim slots vacated this sweep (ascending) before appending.
void dm_install(DmState& state, int j, std::span<const UnitDirection> estimates_j,
                const std::vector<int>& live, const AssignmentSolution& sol) {
    const std::size_t L = live.size();
    std::vector<int> dead;
    for (std::size_t i = 0; i < state.support.size(); ++i)
        if (state.support[i] == 0) dead.push_back(static_cast<int>(i));
    std::size_t next_dead = 0;

    std::vector<std::pair<std::size_t, std::size_t>> by_row;  // (row, k)
    for (std::size_t k = 0; k < sol.col_to_row.size(); ++k) by_row.emplace_back(sol.col_to_row[k], k);
    std::sort(by_row.begin(), by_row.end());

    auto& assign = state.group_assignments[static_cast<std::size_t>(j)];
    const std::size_t V = estimates_j.front().dim();
    for (const auto& [row, k] : by_row) {
        int topic;
        if (row < L) {
            topic = live[row];
        } else if (next_dead < dead.size()) {
            topic = dead[next_dead++];
            state.resultants[static_cast<std::size_t>(topic)].assign(V, 0.0);
        } else {
            topic = static_cast<int>(state.resultants.size());
            state.resultants.emplace_back(V, 0.0);
            state.support.push_back(0);
            state.global_thetas.push_back(estimates_j[k]);  // placeholder, refreshed below
        }
        axpy(1.0, estimates_j[k].coords(), state.resultants[static_cast<std::size_t>(topic)]);
        state.support[static_cast<std::size_t>(topic)] += 1;
        assign[k] = topic;
    }
}

void dm_refresh_thetas(DmState& state) {
    for (std::size_t i = 0; i < state.resultants.size(); ++i) {
        if (state.support[i] > 0)
            state.global_thetas[i] = UnitDirection::normalized(state.resultants[i]);
    }
}

void dm_compact(DmState& state) {
    std::vector<int> remap(state.support.size(), -1);
    std::size_t out = 0;
    for (std::size_t i = 0; i < state.support.size(); ++i) {
        if (state.support[i] == 0) continue;
        remap[i] = static_cast<int>(out);
        if (out != i) {
            state.resultants[out] = std::move(state.resultants[i]);
            state.global_thetas[out] = state.global_thetas[i];
            state.support[out] = state.support[i];
        }
        ++out;
    }
    if (out == state.support.size()) return;
    state.resultants.resize(out);
    state.support.resize(out);
    state.global_thetas.erase(state.global_thetas.begin() + static_cast<std::ptrdiff_t>(out),
                              state.global_thetas.end());
    for (auto& assign : state.group_assignments)
        for (int& i : assign)
            if (i >= 0) i = remap[static_cast<std::size_t>(i)];
}

}  // namespace

bool dm_sweep(DmState& state, int j, std::span<const UnitDirection> estimates_j,
              const DmObserver& observer, int sweep_index) {
    const std::vector<int> before = state.group_assignments[static_cast<std::size_t>(j)];
    dm_detach_group(state, j, estimates_j);
    const std::vector<int> live = dm_live_rows(state);
    const CostMatrix cost = dm_group_cost(state, j, estimates_j);
    const AssignmentSolution sol = solve_max_assignment(cost);
    dm_install(state, j, estimates_j, live, sol);
    dm_refresh_thetas(state);
    dm_compact(state);
    const bool changed = before != state.group_assignments[static_cast<std::size_t>(j)];
    if (observer)
        observer(DmSweepEvent{sweep_index, j, cost, sol, changed,
                              static_cast<int>(state.global_thetas.size())});
    return changed;
}

DmState dm_run(const std::vector<std::vector<UnitDirection>>& groups,
               const ModelHyperparams& hyper, Rng& rng, int max_sweeps,
               const DmObserver& observer) {
    DmState state;
    state.hyper = hyper;
    state.group_count = static_cast<int>(groups.size());
    state.group_assignments.resize(groups.size());
    for (std::size_t j = 0; j < groups.size(); ++j)
        state.group_assignments[j].assign(groups[j].size(), -1);

    // sequential initialization over a random group order; the 1-based
    // position acts as the time horizon in the prior odds
    std::vector<int> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    int position = 0;
    for (int j : order) {
        ++position;
        const auto& est = groups[static_cast<std::size_t>(j)];
        if (est.empty()) continue;
        const std::vector<int> live = dm_live_rows(state);
        const CostMatrix cost = dm_group_cost_at_horizon(state, j, est, position);
        const AssignmentSolution sol = solve_max_assignment(cost);
        dm_install(state, j, est, live, sol);
        dm_refresh_thetas(state);
        dm_compact(state);
        if (observer)
            observer(DmSweepEvent{0, j, cost, sol, true,
                                  static_cast<int>(state.global_thetas.size())});
    }

    state.converged = false;
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        rng.shuffle(order.begin(), order.end());
        bool changed = false;
        for (int j : order) {
            const auto& est = groups[static_cast<std::size_t>(j)];
            if (est.empty()) continue;
            if (dm_sweep(state, j, est, observer, sweep)) changed = true;
        }
        state.sweeps_used = sweep;
        if (!changed) {
            state.converged = true;
            break;
        }
    }
    return state;
}

}  // namespace metatopic

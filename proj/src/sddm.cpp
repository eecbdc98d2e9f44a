#include "metatopic/sddm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace metatopic {

void sddm_begin_step(SddmState& state, const std::vector<std::vector<UnitDirection>>& estimates_per_group) {
    const std::size_t L = state.global_thetas.size();
    state.anchored_count = L;
    std::size_t V = 0;
    for (const auto& g : estimates_per_group)
        if (!g.empty()) V = g.front().dim();
    if (V == 0 && L > 0) V = state.global_thetas.front().dim();
    state.step_resultants.assign(L, Vec(V, 0.0));
    state.step_support.assign(L, 0);
    state.step_assign.assign(estimates_per_group.size(), {});
    for (std::size_t j = 0; j < estimates_per_group.size(); ++j)
        state.step_assign[j].assign(estimates_per_group[j].size(), -1);
    if (state.group_popularity.size() < estimates_per_group.size())
        state.group_popularity.resize(estimates_per_group.size());
    for (auto& row : state.group_popularity) row.resize(L, 0);
}

void sddm_detach_group(SddmState& state, int j, std::span<const UnitDirection> estimates_j) {
    auto& assign = state.step_assign[static_cast<std::size_t>(j)];
    for (std::size_t k = 0; k < assign.size(); ++k) {
        const int i = assign[k];
        if (i < 0) continue;
        axpy(-1.0, estimates_j[k].coords(), state.step_resultants[static_cast<std::size_t>(i)]);
        state.step_support[static_cast<std::size_t>(i)] -= 1;
        assign[k] = -1;
    }
}

std::vector<int> sddm_live_rows(const SddmState& state) {
    std::vector<int> live;
    for (std::size_t i = 0; i < state.step_resultants.size(); ++i) {
        if (i < state.anchored_count || state.step_support[i] > 0) live.push_back(static_cast<int>(i));
    }
    return live;
}

CostMatrix sddm_group_cost(const SddmState& state, int j, std::span<const UnitDirection> estimates_j) {
    const auto& h = state.hyper;
    const int t = state.t + 1;
    const std::vector<int> live = sddm_live_rows(state);
    const std::size_t L = live.size();
    const std::size_t K = estimates_j.size();
    const std::size_t n_new = static_cast<std::size_t>(h.new_rows(static_cast<int>(L), static_cast<int>(K)));
    const auto& pop = state.group_popularity[static_cast<std::size_t>(j)];

    CostMatrix cost(L + n_new, K);
    for (std::size_t a = 0; a < L; ++a) {
        const auto i = static_cast<std::size_t>(live[a]);
        // tau1-weighted step resultant, plus the anchor pull for topics that
        // existed before this step
        Vec base = state.step_resultants[i];
        scale_inplace(base, h.tau1);
        if (i < state.anchored_count) axpy(h.tau0, state.global_thetas[i].coords(), base);
        const double base_norm = norm2(base);
        double odds;
        if (i < state.anchored_count) {
            // group-specific popularity odds over the time horizon
            const int m = i < pop.size() ? pop[i] : 0;
            const int mc = h.capped_count(m);
            odds = h.prior_log_odds(1.0 + mc, mc, t);
        } else {
            // born this step: no history, so the odds come from the
            // current-step support across groups, as in the static matcher
            const int mc = h.capped_count(state.step_support[i]);
            odds = h.prior_log_odds(static_cast<double>(mc), mc, state.group_count);
        }
        for (std::size_t k = 0; k < K; ++k) {
            Vec sum = base;
            axpy(h.tau1, estimates_j[k].coords(), sum);
            cost.at(a, k) = norm2(sum) - base_norm + odds;
        }
    }
    for (std::size_t jj = 1; jj <= n_new; ++jj) {
        const double val = h.tau1 + std::log(h.gamma0 / state.group_count) - std::log(static_cast<double>(jj));
        for (std::size_t k = 0; k < K; ++k) cost.at(L + jj - 1, k) = val;
    }
    return cost;
}

namespace {

void sddm_install(SddmState& state, int j, std::span<const UnitDirection> estimates_j,
                  const std::vector<int>& live, const AssignmentSolution& sol) {
    const std::size_t L = live.size();
    std::vector<int> dead;  // born slots stripped of support; reusable
    for (std::size_t i = state.anchored_count; i < state.step_resultants.size(); ++i)
        if (state.step_support[i] == 0) dead.push_back(static_cast<int>(i));
    std::size_t next_dead = 0;

    std::vector<std::pair<std::size_t, std::size_t>> by_row;
    for (std::size_t k = 0; k < sol.col_to_row.size(); ++k) by_row.emplace_back(sol.col_to_row[k], k);
    std::sort(by_row.begin(), by_row.end());

    auto& assign = state.step_assign[static_cast<std::size_t>(j)];
    const std::size_t V = estimates_j.front().dim();
    for (const auto& [row, k] : by_row) {
        int slot;
        if (row < L) {
            slot = live[row];
        } else if (next_dead < dead.size()) {
            slot = dead[next_dead++];
            state.step_resultants[static_cast<std::size_t>(slot)].assign(V, 0.0);
        } else {
            slot = static_cast<int>(state.step_resultants.size());
            state.step_resultants.emplace_back(V, 0.0);
            state.step_support.push_back(0);
        }
        axpy(1.0, estimates_j[k].coords(), state.step_resultants[static_cast<std::size_t>(slot)]);
        state.step_support[static_cast<std::size_t>(slot)] += 1;
        assign[k] = slot;
    }
}

}  // namespace

bool sddm_sweep_group(SddmState& state, int j, std::span<const UnitDirection> estimates_j,
                      const SddmObserver& observer, int sweep_index) {
    const std::vector<int> before = state.step_assign[static_cast<std::size_t>(j)];
    sddm_detach_group(state, j, estimates_j);
    const std::vector<int> live = sddm_live_rows(state);
    const CostMatrix cost = sddm_group_cost(state, j, estimates_j);
    const AssignmentSolution sol = solve_max_assignment(cost);
    if (observer) observer(SddmSweepEvent{sweep_index, j, cost, sol});
    sddm_install(state, j, estimates_j, live, sol);
    return before != state.step_assign[static_cast<std::size_t>(j)];
}

SddmStepInfo sddm_step(SddmState& state,
                       const std::vector<std::vector<UnitDirection>>& estimates_per_group,
                       Rng& rng, int max_sweeps, const SddmObserver& observer) {
    SddmStepInfo info;
    const int t = state.t + 1;
    sddm_begin_step(state, estimates_per_group);

    bool any = false;
    for (const auto& g : estimates_per_group)
        if (!g.empty()) any = true;
    if (any) {
        std::vector<int> order(estimates_per_group.size());
        std::iota(order.begin(), order.end(), 0);
        info.converged = false;
        for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
            rng.shuffle(order.begin(), order.end());
            bool changed = false;
            for (int j : order) {
                const auto& est = estimates_per_group[static_cast<std::size_t>(j)];
                if (est.empty()) continue;
                if (sddm_sweep_group(state, j, est, observer, sweep)) changed = true;
            }
            info.sweeps = sweep;
            if (!changed) {
                info.converged = true;
                break;
            }
        }
    }

    // MAP updates and bookkeeping
    const std::size_t n_slots = state.step_resultants.size();
    std::vector<int> remap(n_slots, -1);
    std::vector<UnitDirection> thetas;
    thetas.reserve(n_slots);
    for (std::size_t i = 0; i < n_slots; ++i) {
        if (i < state.anchored_count) {
            remap[i] = static_cast<int>(thetas.size());
            if (state.step_support[i] > 0) {
                Vec r = state.step_resultants[i];
                scale_inplace(r, state.hyper.tau1);
                axpy(state.hyper.tau0, state.global_thetas[i].coords(), r);
                thetas.push_back(UnitDirection::normalized(std::move(r)));
                info.matched += state.step_support[i];
            } else {
                thetas.push_back(state.global_thetas[i]);  // dormant, carried forward
                info.dormant += 1;
            }
        } else if (state.step_support[i] > 0) {
            remap[i] = static_cast<int>(thetas.size());
            thetas.push_back(UnitDirection::normalized(state.step_resultants[i]));
            info.created += 1;
        }
    }
    state.global_thetas = std::move(thetas);

    const std::size_t L_new = state.global_thetas.size();
    if (state.group_popularity.size() < estimates_per_group.size())
        state.group_popularity.resize(estimates_per_group.size());
    for (auto& row : state.group_popularity) row.resize(L_new, 0);
    for (std::size_t j = 0; j < state.step_assign.size(); ++j) {
        for (int slot : state.step_assign[j]) {
            if (slot < 0) continue;
            state.group_popularity[j][static_cast<std::size_t>(remap[static_cast<std::size_t>(slot)])] += 1;
        }
    }

    state.t = t;
    state.converged = info.converged;
    state.sweeps_used = info.sweeps;
    state.step_resultants.clear();
    state.step_support.clear();
    state.step_assign.clear();
    state.anchored_count = L_new;
    return info;
}

}  // namespace metatopic

#include "metatopic/sdm.hpp"

#include <algorithm>
#include <cmath>

namespace metatopic {

CostMatrix sdm_cost(const SdmState& state, std::span<const UnitDirection> estimates) {
    const int t = state.t + 1;  // timestep being matched
    const std::size_t L = state.trajectories.size();
    const std::size_t K = estimates.size();
    const auto& h = state.hyper;
    const std::size_t n_new = static_cast<std::size_t>(h.new_rows(static_cast<int>(L), static_cast<int>(K)));

    CostMatrix cost(L + n_new, K);
    for (std::size_t i = 0; i < L; ++i) {
        const auto& traj = state.trajectories[i];
        const int mc = h.capped_count(traj.popularity);
        const double odds = h.prior_log_odds(static_cast<double>(mc), mc, t);
        for (std::size_t k = 0; k < K; ++k) {
            const Vec r = weighted_sum(h.tau1, estimates[k].coords(), h.tau0, traj.theta.coords());
            cost.at(i, k) = norm2(r) - h.tau0 + odds;
        }
    }
    for (std::size_t j = 1; j <= n_new; ++j) {
        const double val = h.tau1 + std::log(h.gamma0 / t) - std::log(static_cast<double>(j));
        for (std::size_t k = 0; k < K; ++k) cost.at(L + j - 1, k) = val;
    }
    return cost;
}

SdmStepInfo sdm_step(SdmState& state, std::span<const UnitDirection> estimates) {
    SdmStepInfo info;
    const std::size_t L = state.trajectories.size();
    const int t = state.t + 1;
    if (estimates.empty()) {
        info.dormant = static_cast<int>(L);
        state.t = t;
        if (state.keep_history)
            for (auto& traj : state.trajectories) traj.history.emplace_back(t, traj.theta);
        return info;
    }

    const CostMatrix cost = sdm_cost(state, estimates);
    const AssignmentSolution sol = solve_max_assignment(cost);

    std::vector<std::pair<std::size_t, std::size_t>> births;  // (row, estimate)
    for (std::size_t k = 0; k < estimates.size(); ++k) {
        const std::size_t row = sol.col_to_row[k];
        if (row < L) {
            auto& traj = state.trajectories[row];
            traj.theta = vmf_map_combine(&traj.theta, state.hyper.tau0,
                                         std::span<const UnitDirection>(&estimates[k], 1),
                                         state.hyper.tau1);
            traj.popularity += 1;
            info.matched += 1;
        } else {
            births.emplace_back(row, k);
        }
    }
    std::sort(births.begin(), births.end());
    for (const auto& [row, k] : births) {
        state.trajectories.push_back(GlobalTopicTrajectory{estimates[k], 1, t, {}});
        info.created += 1;
    }
    info.dormant = static_cast<int>(L) - info.matched;
    state.t = t;
    if (state.keep_history)
        for (auto& traj : state.trajectories) traj.history.emplace_back(t, traj.theta);
    return info;
}

double sdm_objective(std::span<const UnitDirection> prev_thetas,
                     std::span<const UnitDirection> new_thetas,
                     const std::vector<std::size_t>& col_to_row,
                     std::span<const UnitDirection> estimates,
                     std::span<const int> m_counts, int t,
                     const ModelHyperparams& hyper) {
    const std::size_t L = prev_thetas.size();
    double obj = 0.0;

    // dynamics term covers every surviving topic, matched or dormant
    for (std::size_t i = 0; i < L; ++i) obj += hyper.tau0 * dot(prev_thetas[i], new_thetas[i]);

    // rank new rows by index so their thetas can be found in birth order
    std::vector<std::size_t> new_rows;
    for (std::size_t k = 0; k < col_to_row.size(); ++k)
        if (col_to_row[k] >= L) new_rows.push_back(col_to_row[k]);
    std::sort(new_rows.begin(), new_rows.end());

    for (std::size_t k = 0; k < col_to_row.size(); ++k) {
        const std::size_t row = col_to_row[k];
        std::size_t theta_idx;
        if (row < L) {
            const int mc = hyper.capped_count(m_counts[row]);
            obj += hyper.prior_log_odds(static_cast<double>(mc), mc, t);
            theta_idx = row;
        } else {
            const auto rank = static_cast<std::size_t>(
                std::lower_bound(new_rows.begin(), new_rows.end(), row) - new_rows.begin());
            theta_idx = L + rank;
        }
        obj += hyper.tau1 * dot(new_thetas[theta_idx], estimates[k]);
    }

    const auto n_new = static_cast<double>(new_rows.size());
    obj += n_new * std::log(hyper.gamma0 / t) - std::lgamma(n_new + 1.0);
    return obj;
}

}  // namespace metatopic

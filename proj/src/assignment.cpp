#include "metatopic/assignment.hpp"

#include <algorithm>
#include <cmath>

namespace metatopic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shape(const CostMatrix& cost) {
    if (cost.cols == 0) throw std::invalid_argument("cost matrix has no columns");
    if (cost.rows < cost.cols) throw std::invalid_argument("cost matrix needs rows >= columns");
    if (cost.entries.size() != cost.rows * cost.cols) throw std::invalid_argument("cost matrix entry count mismatch");
    for (std::size_t c = 0; c < cost.cols; ++c) {
        bool finite = false;
        for (std::size_t r = 0; r < cost.rows && !finite; ++r) finite = std::isfinite(cost.at(r, c));
        if (!finite) throw Infeasible();
    }
}

// -inf entries become a finite sentinel strictly below any objective a fully
// finite assignment can reach: min_finite - (K * range + 1).
std::vector<double> with_sentinel(const CostMatrix& cost) {
    double lo = kInf, hi = -kInf;
    for (double e : cost.entries) {
        if (!std::isfinite(e)) continue;
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    const double sentinel = lo - (static_cast<double>(cost.cols) * (hi - lo) + 1.0);
    std::vector<double> out = cost.entries;
    for (double& e : out) {
        if (!std::isfinite(e)) e = sentinel;
    }
    return out;
}

}  // namespace

AssignmentSolution solve_max_assignment(const CostMatrix& cost) {
    check_shape(cost);
    const std::size_t K = cost.cols;  // all must be assigned
    const std::size_t R = cost.rows;
    const std::vector<double> a = with_sentinel(cost);

    // shortest-augmenting-path Hungarian on the transposed (K x R) minimization
    // problem; potentials u over columns-of-cost, v over rows-of-cost.
    std::vector<double> u(K + 1, 0.0), v(R + 1, 0.0);
    std::vector<std::size_t> owner(R + 1, 0);  // 1-based column owning each row; 0 = free
    std::vector<std::size_t> way(R + 1, 0);
    for (std::size_t k = 1; k <= K; ++k) {
        owner[0] = k;
        std::size_t j0 = 0;
        std::vector<double> minv(R + 1, kInf);
        std::vector<char> used(R + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t k0 = owner[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= R; ++j) {
                if (used[j]) continue;
                const double cur = -a[(j - 1) * K + (k0 - 1)] - u[k0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= R; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    AssignmentSolution sol;
    sol.col_to_row.assign(K, 0);
    for (std::size_t j = 1; j <= R; ++j) {
        if (owner[j] != 0) sol.col_to_row[owner[j] - 1] = j - 1;
    }
    for (std::size_t k = 0; k < K; ++k) sol.objective += cost.at(sol.col_to_row[k], k);
    return sol;
}

namespace {

void enumerate(const std::vector<double>& a, std::size_t R, std::size_t K, std::size_t k,
               std::vector<std::size_t>& pick, std::vector<char>& used, double acc,
               AssignmentSolution& best) {
    if (k == K) {
        if (acc > best.objective) {
            best.objective = acc;
            best.col_to_row = pick;
        }
        return;
    }
    for (std::size_t r = 0; r < R; ++r) {
        if (used[r]) continue;
        used[r] = 1;
        pick[k] = r;
        enumerate(a, R, K, k + 1, pick, used, acc + a[r * K + k], best);
        used[r] = 0;
    }
}

}  // namespace

AssignmentSolution brute_force_assignment(const CostMatrix& cost) {
    check_shape(cost);
    if (cost.cols > 8) throw TooLarge();
    const std::vector<double> a = with_sentinel(cost);
    AssignmentSolution best;
    best.objective = -kInf;
    std::vector<std::size_t> pick(cost.cols, 0);
    std::vector<char> used(cost.rows, 0);
    enumerate(a, cost.rows, cost.cols, 0, pick, used, 0.0, best);
    // report the objective in terms of the original entries
    best.objective = 0.0;
    for (std::size_t k = 0; k < cost.cols; ++k) best.objective += cost.at(best.col_to_row[k], k);
    return best;
}

}  // namespace metatopic

#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace metatopic {

struct Infeasible : std::runtime_error {
    Infeasible() : std::runtime_error("a column has only forbidden entries") {}
};
struct TooLarge : std::runtime_error {
    TooLarge() : std::runtime_error("brute force limited to 8 columns") {}
};

// Rectangular maximization cost. Rows are candidate slots (existing topics
// followed by potential-new rows), columns are the estimates to place; rows
// must be >= columns. -inf marks a forbidden pairing.
struct CostMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> entries;  // row-major

    static constexpr double forbidden = -std::numeric_limits<double>::infinity();

    CostMatrix() = default;
    CostMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), entries(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return entries[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
};

struct AssignmentSolution {
    std::vector<std::size_t> col_to_row;  // injective; every column assigned
    double objective = 0.0;
};

// Exact optimum of max sum of selected entries subject to: every column
// assigned to exactly one row, no row used twice. Deterministic; O(K^2 R).
AssignmentSolution solve_max_assignment(const CostMatrix& cost);

// Exhaustive enumeration oracle; columns <= 8.
AssignmentSolution brute_force_assignment(const CostMatrix& cost);

}  // namespace metatopic

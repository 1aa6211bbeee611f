#ifndef ECMOE_CAPPED_SOLVER_HPP
#define ECMOE_CAPPED_SOLVER_HPP

#include <algorithm>
#include <cstddef>

#include "ecmoe/matrix.hpp"
#include "ecmoe/routing.hpp"

namespace ecmoe {

// The capped expert-choice program on A in [0,1]^{e x n}:
//   max <scores, A> + lambda * H(A)
//   s.t. every row sums to row_budget, every column sums to at most token_cap.
struct CappedProblem {
    Matrix scores;  // S^T, e x n
    std::size_t row_budget = 1;
    std::size_t token_cap = 1;
    double entropy_weight = 1e-3;
    std::size_t max_iters = 100;
    double tol = 1e-3;
};

struct Residuals {
    double row_eq = 0.0;    // max_i |sum_j A[i,j] - k|
    double col_ineq = 0.0;  // max_j max(0, sum_i A[i,j] - b)
    double box = 0.0;       // max entry excursion outside [0,1]

    double max_residual() const { return std::max(row_eq, std::max(col_ineq, box)); }
};

struct CappedSolution {
    Matrix a;  // e x n, entries in [0,1]
    std::size_t iterations_used = 0;
    Residuals residuals;
};

// Dykstra cycles of KL (multiplicative) projections, computed in the log
// domain. Non-convergence within max_iters is not an error: residuals are
// reported honestly and the caller decides.
CappedSolution solve_capped(const CappedProblem& p);

// I = topk_rows(A, k); gates are read from the original affinity S at the
// selected (token, expert) pairs, not from A.
RoutingAssignment capped_selection(const CappedSolution& sol, const Matrix& s, std::size_t k);

RoutingAssignment capped_route(const Matrix& s, std::size_t k, std::size_t b,
                               const RouterOptions& opts = {});

}  // namespace ecmoe

#endif

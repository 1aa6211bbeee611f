#include "ecmoe/capped_solver.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ecmoe/kernels.hpp"

namespace ecmoe {

namespace {

double logsumexp(const double* v, std::size_t n, std::size_t stride) {
    double mx = v[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i * stride]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(v[i * stride] - mx);
    return mx + std::log(sum);
}

void validate(const CappedProblem& p) {
    const std::size_t e = p.scores.rows(), n = p.scores.cols();
    if (e == 0 || n == 0) {
        throw std::invalid_argument("solve_capped: empty score matrix");
    }
    if (!(p.entropy_weight > 0.0)) {
        throw std::invalid_argument("solve_capped: entropy weight must be positive");
    }
    if (p.row_budget < 1 || p.row_budget > n) {
        throw std::invalid_argument("solve_capped: row budget must be in [1, n]");
    }
    if (p.token_cap < 1 || p.token_cap > e) {
        throw std::invalid_argument("solve_capped: token cap must be in [1, e]");
    }
    if (e * p.row_budget > n * p.token_cap) {
        throw std::invalid_argument("solve_capped: infeasible, e*k > n*b");
    }
}

}  // namespace

CappedSolution solve_capped(const CappedProblem& p) {
    validate(p);
    const std::size_t e = p.scores.rows(), n = p.scores.cols();
    const double k = static_cast<double>(p.row_budget);
    const double b = static_cast<double>(p.token_cap);
    const double log_k = std::log(k);
    const double log_b = std::log(b);

    // Work on log A throughout; multiplicative scalings become additive
    // shifts and exp overflow cannot occur (this subsumes the per-row max
    // subtraction that a linear-domain implementation would need).
    Matrix log_a(e, n);
    for (std::size_t i = 0; i < e; ++i) {
        double mx = p.scores(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, p.scores(i, j));
        for (std::size_t j = 0; j < n; ++j) {
            log_a(i, j) = (p.scores(i, j) - mx) / p.entropy_weight;
        }
        double shift = log_k - logsumexp(log_a.data() + i * n, n, 1);
        for (std::size_t j = 0; j < n; ++j) log_a(i, j) += shift;
    }

    // Dykstra corrections for the column and box sets. The row set is
    // affine in the KL geometry, so its correction cancels identically and
    // is not carried.
    Matrix corr_col(e, n), corr_box(e, n);

    CappedSolution sol;
    sol.a = Matrix(e, n);
    std::size_t it = 0;
    while (it < p.max_iters) {
        ++it;
        // (1) row sums = k: multiplicative row scaling
        for (std::size_t i = 0; i < e; ++i) {
            double shift = log_k - logsumexp(log_a.data() + i * n, n, 1);
            for (std::size_t j = 0; j < n; ++j) log_a(i, j) += shift;
        }
        // (2) column sums <= b: scale down only violating columns
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < e; ++i) log_a(i, j) += corr_col(i, j);
            double colsum = logsumexp(log_a.data() + j, e, n);
            double shift = std::min(0.0, log_b - colsum);
            for (std::size_t i = 0; i < e; ++i) {
                corr_col(i, j) = -shift;
                log_a(i, j) += shift;
            }
        }
        // (3) box [0,1]: entrywise clamp with correction
        for (std::size_t i = 0; i < e; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double z = log_a(i, j) + corr_box(i, j);
                double clamped = std::min(z, 0.0);
                corr_box(i, j) = z - clamped;
                log_a(i, j) = clamped;
            }
        }

        // residuals of the current iterate
        Residuals r;
        std::vector<double> colsum(n, 0.0);
        for (std::size_t i = 0; i < e; ++i) {
            double rowsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                double v = std::exp(log_a(i, j));
                sol.a(i, j) = v;
                rowsum += v;
                colsum[j] += v;
                r.box = std::max(r.box, v - 1.0);
            }
            r.row_eq = std::max(r.row_eq, std::abs(rowsum - k));
        }
        r.box = std::max(r.box, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            r.col_ineq = std::max(r.col_ineq, colsum[j] - b);
        }
        r.col_ineq = std::max(r.col_ineq, 0.0);
        sol.residuals = r;
        if (r.max_residual() < p.tol) break;
    }
    sol.iterations_used = it;
    return sol;
}

RoutingAssignment capped_selection(const CappedSolution& sol, const Matrix& s, std::size_t k) {
    const std::size_t e = sol.a.rows(), n = sol.a.cols();
    if (s.rows() != n || s.cols() != e) {
        throw std::invalid_argument("capped_selection: affinity shape mismatch");
    }
    auto [vals, idx] = topk_rows(sol.a, k);
    (void)vals;
    IndexMatrix indices(e, k, n + 1);
    Matrix gates(e, k);
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            indices(i, j) = idx(i, j);
            gates(i, j) = s(idx(i, j), i);
        }
    }
    return RoutingAssignment{std::move(indices), std::move(gates), n};
}

RoutingAssignment capped_route(const Matrix& s, std::size_t k, std::size_t b,
                               const RouterOptions& opts) {
    CappedProblem p;
    p.scores = transpose(s);
    p.row_budget = k;
    p.token_cap = b;
    p.entropy_weight = opts.lambda;
    p.max_iters = opts.max_iters;
    p.tol = opts.tol;
    return capped_selection(solve_capped(p), s, k);
}

}  // namespace ecmoe

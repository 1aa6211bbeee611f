#include "ecmoe/routing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ecmoe/kernels.hpp"

namespace ecmoe {

std::size_t capacity(std::size_t n, double c, std::size_t e) {
    if (n < 1 || e < 1 || !(c > 0.0)) {
        throw std::invalid_argument("capacity: need n >= 1, e >= 1, c > 0");
    }
    double raw = static_cast<double>(n) * c / static_cast<double>(e);
    auto k = static_cast<std::size_t>(std::floor(raw + 0.5));  // round half up
    if (k < 1) k = 1;
    if (k > n) {
        throw std::invalid_argument("capacity: k = " + std::to_string(k) +
                                    " exceeds batch of " + std::to_string(n) + " tokens");
    }
    return k;
}

Matrix affinity(const Matrix& x, const Matrix& w_g) {
    return softmax_rows(matmul(x, w_g));
}

RoutingAssignment expert_choice_route(const Matrix& s, std::size_t k) {
    const std::size_t n = s.rows(), e = s.cols();
    if (k > n) {
        throw std::invalid_argument("expert_choice_route: k > n");
    }
    auto [values, idx] = topk_rows(transpose(s), k);
    // widen the index domain to n+1 so the assignment type is shared with the
    // padded routers; expert choice itself never pads
    IndexMatrix indices(e, k, n + 1);
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            indices(i, j) = idx(i, j);
        }
    }
    return RoutingAssignment{std::move(indices), std::move(values), n};
}

TokenChoiceResult token_choice_route(const Matrix& s, std::size_t top_k, std::size_t k) {
    const std::size_t n = s.rows(), e = s.cols();
    if (top_k != 1 && top_k != 2) {
        throw std::invalid_argument("token_choice_route: top_k must be 1 or 2");
    }
    if (k < 1) {
        throw std::invalid_argument("token_choice_route: k must be >= 1");
    }
    if (top_k > e) {
        throw std::invalid_argument("token_choice_route: top_k > num experts");
    }

    auto [sel_vals, sel_idx] = topk_rows(s, top_k);

    TokenChoiceResult res;
    res.top_k = top_k;
    res.per_expert_demand.assign(e, 0);
    res.claims.resize(n);
    IndexMatrix indices(e, k, n + 1);
    Matrix gates(e, k);
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < k; ++j) indices(i, j) = static_cast<std::uint32_t>(n);
    }
    std::vector<std::size_t> fill(e, 0);

    for (std::size_t t = 0; t < n; ++t) {
        TokenClaims& claim = res.claims[t];
        claim.count = static_cast<std::uint32_t>(top_k);
        double mass_total = 0.0, mass_kept = 0.0;
        for (std::size_t c = 0; c < top_k; ++c) {
            const std::uint32_t expert = sel_idx(t, c);
            claim.experts[c] = expert;
            mass_total += sel_vals(t, c);
            res.per_expert_demand[expert] += 1;
            if (fill[expert] < k) {
                std::size_t slot = fill[expert]++;
                indices(expert, slot) = static_cast<std::uint32_t>(t);
                gates(expert, slot) = sel_vals(t, c);
                claim.slot[c] = static_cast<std::int32_t>(slot);
                mass_kept += sel_vals(t, c);
            } else {
                res.dropped.emplace_back(static_cast<std::uint32_t>(t), expert);
            }
        }
        // top-2 renormalization: surviving gates carry the token's full
        // selected mass (no-op when both claims survive)
        if (top_k == 2 && mass_kept > 0.0 && mass_kept != mass_total) {
            double scale = mass_total / mass_kept;
            for (std::size_t c = 0; c < top_k; ++c) {
                if (claim.slot[c] >= 0) {
                    gates(claim.experts[c], static_cast<std::size_t>(claim.slot[c])) *= scale;
                }
            }
        }
    }

    res.assignment = RoutingAssignment{std::move(indices), std::move(gates), n};
    return res;
}

HashRouteResult hash_route(const std::vector<std::uint32_t>& token_ids, std::size_t e,
                           std::size_t k_slots) {
    if (token_ids.empty()) {
        throw std::invalid_argument("hash_route: empty token id list");
    }
    if (e < 1) {
        throw std::invalid_argument("hash_route: need at least one expert");
    }
    const std::size_t n = token_ids.size();
    HashRouteResult res;
    res.per_expert.assign(e, {});
    for (std::size_t t = 0; t < n; ++t) {
        res.per_expert[token_ids[t] % e].push_back(static_cast<std::uint32_t>(t));
    }
    std::size_t max_load = 0;
    for (const auto& lst : res.per_expert) max_load = std::max(max_load, lst.size());
    const std::size_t width = std::max(k_slots, max_load);

    IndexMatrix indices(e, width, n + 1);
    Matrix gates(e, width);
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < width; ++j) indices(i, j) = static_cast<std::uint32_t>(n);
        for (std::size_t j = 0; j < res.per_expert[i].size(); ++j) {
            indices(i, j) = res.per_expert[i][j];
            gates(i, j) = 1.0;
        }
    }
    res.assignment = RoutingAssignment{std::move(indices), std::move(gates), n};
    return res;
}

double aux_load_balance_loss(const Matrix& s, const std::vector<std::size_t>& per_expert_demand,
                             std::size_t top_k, double alpha) {
    const std::size_t n = s.rows(), e = s.cols();
    if (per_expert_demand.size() != e) {
        throw std::invalid_argument("aux_load_balance_loss: demand size != num experts");
    }
    const double claims = static_cast<double>(n) * static_cast<double>(top_k);
    double loss = 0.0;
    for (std::size_t i = 0; i < e; ++i) {
        double f = static_cast<double>(per_expert_demand[i]) / claims;
        double p = 0.0;
        for (std::size_t t = 0; t < n; ++t) p += s(t, i);
        p /= static_cast<double>(n);
        loss += f * p;
    }
    return alpha * static_cast<double>(e) * loss;
}

Matrix aux_load_balance_grad_s(const Matrix& s, const std::vector<std::size_t>& per_expert_demand,
                               std::size_t top_k, double alpha) {
    const std::size_t n = s.rows(), e = s.cols();
    const double claims = static_cast<double>(n) * static_cast<double>(top_k);
    Matrix grad(n, e);
    for (std::size_t i = 0; i < e; ++i) {
        double f = static_cast<double>(per_expert_demand[i]) / claims;
        double g = alpha * static_cast<double>(e) * f / static_cast<double>(n);
        for (std::size_t t = 0; t < n; ++t) grad(t, i) = g;
    }
    return grad;
}

}  // namespace ecmoe

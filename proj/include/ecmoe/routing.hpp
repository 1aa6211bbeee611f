#ifndef ECMOE_ROUTING_HPP
#define ECMOE_ROUTING_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "ecmoe/matrix.hpp"

namespace ecmoe {

enum class RouterKind { ExpertChoice, ExpertChoiceCapped, TokenChoiceTop1, TokenChoiceTop2, Hash };

// Options shared by the router variants that need them; ignored otherwise.
struct RouterOptions {
    std::size_t cap_b = 2;          // max experts per token (capped routing)
    double lambda = 1e-3;           // entropy weight of the capped solver
    std::size_t max_iters = 100;    // solver iteration budget
    double tol = 1e-3;              // solver residual tolerance
    double aux_loss_weight = 0.01;  // token-choice auxiliary balance loss
};

// Per-expert bucket size k = max(1, round_half_up(n*c/e)). Throws when the
// result exceeds n.
std::size_t capacity(std::size_t n, double c, std::size_t e);

struct RouterConfig {
    std::size_t num_experts = 1;
    double capacity_factor = 2.0;
    std::size_t tokens = 1;

    std::size_t bucket_size() const { return capacity(tokens, capacity_factor, num_experts); }
};

// Token-to-expert affinity: softmax_rows(X * W_g), rows on the simplex.
Matrix affinity(const Matrix& x, const Matrix& w_g);

// The universal router output. indices is e x k with domain n+1: the value n
// is the padding sentinel (gate 0); every real entry is a token id < n.
// Within a row all real entries are distinct.
struct RoutingAssignment {
    IndexMatrix indices;
    Matrix gates;
    std::size_t num_tokens = 0;

    std::size_t num_experts() const { return indices.rows(); }
    std::size_t slots() const { return indices.cols(); }
    bool slot_is_padded(std::size_t i, std::size_t j) const {
        return indices(i, j) == num_tokens;
    }
};

// Row i of (G, I) = top-k of column i of S; G[i][j] = S[I[i][j]][i] exactly.
RoutingAssignment expert_choice_route(const Matrix& s, std::size_t k);

// One token's claims under token-choice routing: the selected experts in
// rank order, and the assignment slot each accepted claim landed in (-1 when
// the claim was dropped at capacity).
struct TokenClaims {
    std::array<std::uint32_t, 2> experts{};
    std::array<std::int32_t, 2> slot{-1, -1};
    std::uint32_t count = 0;
};

struct TokenChoiceResult {
    RoutingAssignment assignment;                             // padded
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dropped;  // (token, expert)
    std::vector<std::size_t> per_expert_demand;               // pre-capacity
    std::size_t top_k = 1;
    std::vector<TokenClaims> claims;                          // one per token
};

// Tokens processed in ascending id; a claim is accepted iff the expert has
// fewer than k accepted tokens so far. Top-2 gates of a token's surviving
// experts are renormalized to sum to that token's original top-2 mass.
TokenChoiceResult token_choice_route(const Matrix& s, std::size_t top_k, std::size_t k);

struct HashRouteResult {
    std::vector<std::vector<std::uint32_t>> per_expert;  // ragged token lists
    RoutingAssignment assignment;  // padded view, width >= longest expert load
};

// token id t -> expert t mod e, gate 1.0, no capacity truncation.
HashRouteResult hash_route(const std::vector<std::uint32_t>& token_ids, std::size_t e,
                           std::size_t k_slots);

// alpha * e * sum_i f_i * P_i with f_i = demand_i / (n*top_k) and
// P_i = mean_t S[t][i]. f is a constant of the forward pass; only P carries
// gradient, so d/dS[t][i] = alpha * e * f_i / n.
double aux_load_balance_loss(const Matrix& s, const std::vector<std::size_t>& per_expert_demand,
                             std::size_t top_k, double alpha);
Matrix aux_load_balance_grad_s(const Matrix& s, const std::vector<std::size_t>& per_expert_demand,
                               std::size_t top_k, double alpha);

}  // namespace ecmoe

#endif

#ifndef ECMOE_METRICS_HPP
#define ECMOE_METRICS_HPP

#include <cstddef>
#include <vector>

#include "ecmoe/routing.hpp"

namespace ecmoe {

struct LoadStats {
    std::vector<std::size_t> per_expert_load;        // non-padded slots per expert
    std::vector<std::size_t> experts_per_token_hist; // index m = tokens on exactly m experts
    double mean_experts_per_token = 0.0;
    double over_capacity_ratio = 0.0;                // dropped claims / total claims
    double per_expert_over_capacity_max = 0.0;       // max_i drops_i / demand_i
    double dropped_token_fraction = 0.0;             // tokens with zero accepted assignments
};

// Routers without capacity truncation (expert choice, capped, hash) have an
// over-capacity ratio of 0 by definition.
LoadStats compute_stats(const RoutingAssignment& assignment, const RouterConfig& cfg);
LoadStats compute_stats(const TokenChoiceResult& result, const RouterConfig& cfg);

// Number of tokens selected by more than b experts.
std::size_t cap_violations(const RoutingAssignment& assignment, std::size_t b);

}  // namespace ecmoe

#endif

#include "ecmoe/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace ecmoe {

namespace {

LoadStats base_stats(const RoutingAssignment& a, std::size_t e_expected) {
    const std::size_t e = a.num_experts();
    const std::size_t n = a.num_tokens;
    if (e_expected != 0 && e != e_expected) {
        throw std::invalid_argument("compute_stats: assignment experts != config experts");
    }
    LoadStats st;
    st.per_expert_load.assign(e, 0);
    std::vector<std::size_t> multiplicity(n, 0);
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < a.slots(); ++j) {
            if (a.slot_is_padded(i, j)) continue;
            st.per_expert_load[i] += 1;
            multiplicity[a.indices(i, j)] += 1;
        }
    }
    st.experts_per_token_hist.assign(e + 1, 0);
    std::size_t total = 0;
    for (std::size_t t = 0; t < n; ++t) {
        st.experts_per_token_hist[std::min(multiplicity[t], e)] += 1;
        total += multiplicity[t];
    }
    st.mean_experts_per_token = static_cast<double>(total) / static_cast<double>(n);
    st.dropped_token_fraction =
        static_cast<double>(st.experts_per_token_hist[0]) / static_cast<double>(n);
    return st;
}

}  // namespace

LoadStats compute_stats(const RoutingAssignment& assignment, const RouterConfig& cfg) {
    return base_stats(assignment, cfg.num_experts);
}

LoadStats compute_stats(const TokenChoiceResult& result, const RouterConfig& cfg) {
    LoadStats st = base_stats(result.assignment, cfg.num_experts);
    const std::size_t n = result.assignment.num_tokens;
    const double claims = static_cast<double>(n) * static_cast<double>(result.top_k);
    st.over_capacity_ratio = static_cast<double>(result.dropped.size()) / claims;
    for (std::size_t i = 0; i < result.per_expert_demand.size(); ++i) {
        const std::size_t demand = result.per_expert_demand[i];
        if (demand == 0) continue;
        const std::size_t drops = demand - st.per_expert_load[i];
        st.per_expert_over_capacity_max =
            std::max(st.per_expert_over_capacity_max,
                     static_cast<double>(drops) / static_cast<double>(demand));
    }
    return st;
}

std::size_t cap_violations(const RoutingAssignment& assignment, std::size_t b) {
    const std::size_t n = assignment.num_tokens;
    std::vector<std::size_t> multiplicity(n, 0);
    for (std::size_t i = 0; i < assignment.num_experts(); ++i) {
        for (std::size_t j = 0; j < assignment.slots(); ++j) {
            if (assignment.slot_is_padded(i, j)) continue;
            multiplicity[assignment.indices(i, j)] += 1;
        }
    }
    std::size_t count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (multiplicity[t] > b) ++count;
    }
    return count;
}

}  // namespace ecmoe

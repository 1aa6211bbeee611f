#ifndef ECMOE_TRAIN_HPP
#define ECMOE_TRAIN_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecmoe/capped_solver.hpp"
#include "ecmoe/metrics.hpp"
#include "ecmoe/routing.hpp"
#include "ecmoe/synthetic.hpp"

namespace ecmoe {

// The flat run configuration; these thirteen keys are exactly the config
// file schema.
struct RunConfig {
    std::string router = "ec";  // ec | ec-capped | top1 | top2 | hash
    std::size_t experts = 8;
    double capacity_factor = 2.0;
    std::size_t cap_b = 2;
    double lambda = 1e-3;
    std::size_t max_iter = 100;
    double tol = 1e-3;
    std::size_t d_model = 16;
    std::size_t d_hidden = 32;
    std::size_t steps = 2000;
    double lr = 0.05;
    std::uint64_t seed = 1;
    double aux_loss_weight = 0.01;

    RouterConfig router_config(std::size_t tokens) const {
        return RouterConfig{experts, capacity_factor, tokens};
    }
    RouterOptions router_options() const {
        return RouterOptions{cap_b, lambda, max_iter, tol, aux_loss_weight};
    }
};

RouterKind parse_router(const std::string& name);
std::string router_name(RouterKind kind);

// Default synthetic stream used when the caller does not specify one.
SyntheticSpec default_spec(std::uint64_t seed);

struct RunReport {
    RunConfig config;
    SyntheticSpec spec;
    std::string input_path;    // set instead of spec when routing a batch file
    std::vector<double> loss;  // held-out loss, entry 0 before any update
    LoadStats final_stats;
    std::optional<Residuals> solver_residuals;
    std::size_t solver_iterations = 0;
    std::vector<std::pair<std::string, double>> timings_ms;
    bool diverged = false;

    double final_loss() const { return loss.empty() ? 0.0 : loss.back(); }
};

// Plain SGD on the MoE parameters over the toy regression task: fresh batch
// per step from the seeded stream, loss recorded on a fixed held-out batch,
// residual connection X + x_out, token-choice routers add the auxiliary
// balance loss to the objective.
RunReport train_toy(const RunConfig& config, const SyntheticSpec& spec);

}  // namespace ecmoe

#endif

#ifndef ECMOE_MOE_LAYER_HPP
#define ECMOE_MOE_LAYER_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "ecmoe/capped_solver.hpp"
#include "ecmoe/matrix.hpp"
#include "ecmoe/routing.hpp"

namespace ecmoe {

struct MoEParams {
    Matrix w_g;               // d x e
    std::vector<Matrix> w1;   // e of d x d'
    std::vector<Matrix> w2;   // e of d x d'

    std::size_t d() const { return w_g.rows(); }
    std::size_t num_experts() const { return w_g.cols(); }
    std::size_t d_hidden() const { return w1.empty() ? 0 : w1[0].cols(); }
};

// Test hooks: bypass the expert FFN with identity, or pin all non-padded
// gates to 1. Both default off.
struct MoEHooks {
    bool identity_expert = false;
    bool force_gates_one = false;
};

struct MoEForwardTrace {
    Matrix s;                      // n x e affinity
    RoutingAssignment assignment;  // e x k
    RouterKind router = RouterKind::ExpertChoice;
    std::optional<TokenChoiceResult> token_choice;  // claims, for gate backprop
    std::optional<Residuals> solver_residuals;      // capped router only
    std::size_t solver_iterations = 0;
    std::vector<Matrix> x_in;  // e of k x d, gathered inputs
    std::vector<Matrix> h;     // e of k x d', pre-GeLU (empty with identity hook)
    std::vector<Matrix> x_e;   // e of k x d, expert outputs
    Matrix x_out;              // n x d
    MoEHooks hooks;
};

MoEForwardTrace forward(const TokenBatch& x, const MoEParams& params, RouterKind router,
                        const RouterConfig& cfg, const RouterOptions& opts = {},
                        const MoEHooks& hooks = {});

// Re-runs the layer with the routing indices (and token-choice claim
// structure) pinned from a previous trace; gates are recomputed from the
// fresh affinity. This is the forward that finite-difference checks probe.
MoEForwardTrace forward_pinned(const TokenBatch& x, const MoEParams& params,
                               const MoEForwardTrace& pin, const MoEHooks& hooks = {});

struct MoEGradients {
    Matrix x;                      // n x d
    Matrix w_g;                    // d x e
    std::vector<Matrix> w1, w2;    // e of d x d'
};

// Exact reverse mode through affinity, gather, expert FFN and combine, with
// the index matrix treated as a constant of the forward pass. Gradients flow
// through the gate values and the FFN path.
MoEGradients backward(const MoEForwardTrace& trace, const TokenBatch& x, const MoEParams& params,
                      const Matrix& grad_out);

// Uniform init in +-sqrt(6/(fan_in+fan_out)) per matrix from one splitmix64
// stream: w_g first, then w1[0..e-1], then w2[0..e-1], all row-major.
MoEParams init_params(std::uint64_t seed, std::size_t d, std::size_t d_hidden, std::size_t e);

// The w_g block of init_params, identical bits for equal seeds.
Matrix init_gating(std::uint64_t seed, std::size_t d, std::size_t e);

}  // namespace ecmoe

#endif

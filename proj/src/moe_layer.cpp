#include "ecmoe/moe_layer.hpp"

#include <cmath>
#include <stdexcept>

#include "ecmoe/kernels.hpp"
#include "ecmoe/prng.hpp"

namespace ecmoe {

namespace {

void fill_uniform(Matrix& m, SplitMix64& prng, double limit) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            m(i, j) = prng.next_uniform(-limit, limit);
        }
    }
}

RoutingAssignment route(const Matrix& s, const TokenBatch& x, RouterKind router,
                        std::size_t k, const RouterOptions& opts, MoEForwardTrace& trace) {
    switch (router) {
        case RouterKind::ExpertChoice:
            return expert_choice_route(s, k);
        case RouterKind::ExpertChoiceCapped: {
            CappedProblem p;
            p.scores = transpose(s);
            p.row_budget = k;
            p.token_cap = opts.cap_b;
            p.entropy_weight = opts.lambda;
            p.max_iters = opts.max_iters;
            p.tol = opts.tol;
            CappedSolution sol = solve_capped(p);
            trace.solver_residuals = sol.residuals;
            trace.solver_iterations = sol.iterations_used;
            return capped_selection(sol, s, k);
        }
        case RouterKind::TokenChoiceTop1:
        case RouterKind::TokenChoiceTop2: {
            std::size_t top_k = router == RouterKind::TokenChoiceTop1 ? 1 : 2;
            trace.token_choice = token_choice_route(s, top_k, k);
            return trace.token_choice->assignment;
        }
        case RouterKind::Hash: {
            if (!x.has_ids()) {
                throw std::invalid_argument("forward: hash router needs token ids");
            }
            return hash_route(x.ids, s.cols(), k).assignment;
        }
    }
    throw std::invalid_argument("forward: unknown router kind");
}

// Gates recomputed from a (possibly new) affinity at pinned indices, per the
// producing router's gate rule.
Matrix gates_from_affinity(const Matrix& s, const RoutingAssignment& a, RouterKind router,
                           const std::optional<TokenChoiceResult>& tc) {
    const std::size_t e = a.num_experts(), k = a.slots();
    Matrix gates(e, k);
    switch (router) {
        case RouterKind::ExpertChoice:
        case RouterKind::ExpertChoiceCapped:
            for (std::size_t i = 0; i < e; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    if (!a.slot_is_padded(i, j)) gates(i, j) = s(a.indices(i, j), i);
                }
            }
            break;
        case RouterKind::TokenChoiceTop1:
        case RouterKind::TokenChoiceTop2: {
            if (!tc) throw std::invalid_argument("gates_from_affinity: missing claim record");
            for (std::size_t t = 0; t < tc->claims.size(); ++t) {
                const TokenClaims& c = tc->claims[t];
                double mass_total = 0.0, mass_kept = 0.0;
                for (std::uint32_t q = 0; q < c.count; ++q) {
                    double v = s(t, c.experts[q]);
                    mass_total += v;
                    if (c.slot[q] >= 0) mass_kept += v;
                }
                for (std::uint32_t q = 0; q < c.count; ++q) {
                    if (c.slot[q] < 0) continue;
                    double v = s(t, c.experts[q]);
                    if (c.count == 2 && mass_kept > 0.0 && mass_kept != mass_total) {
                        v *= mass_total / mass_kept;
                    }
                    gates(c.experts[q], static_cast<std::size_t>(c.slot[q])) = v;
                }
            }
            break;
        }
        case RouterKind::Hash:
            for (std::size_t i = 0; i < e; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    if (!a.slot_is_padded(i, j)) gates(i, j) = 1.0;
                }
            }
            break;
    }
    return gates;
}

void run_experts_and_combine(const TokenBatch& x, const MoEParams& params,
                             const MoEHooks& hooks, MoEForwardTrace& trace) {
    const std::size_t e = trace.assignment.num_experts();
    const std::size_t k = trace.assignment.slots();
    const std::size_t n = x.tokens(), d = x.dim();

    trace.x_in.assign(e, Matrix());
    trace.h.assign(e, Matrix());
    trace.x_e.assign(e, Matrix());

    #pragma omp parallel for schedule(static) if (e > 1 && n * d > 4096)
    for (std::ptrdiff_t ei = 0; ei < static_cast<std::ptrdiff_t>(e); ++ei) {
        const std::size_t i = static_cast<std::size_t>(ei);
        Matrix xin(k, d);
        for (std::size_t j = 0; j < k; ++j) {
            if (trace.assignment.slot_is_padded(i, j)) continue;  // stays zero
            const std::uint32_t t = trace.assignment.indices(i, j);
            for (std::size_t c = 0; c < d; ++c) xin(j, c) = x.x(t, c);
        }
        if (hooks.identity_expert) {
            trace.x_e[i] = xin;
        } else {
            Matrix h = matmul(xin, params.w1[i]);
            Matrix act(h.rows(), h.cols());
            for (std::size_t r = 0; r < h.rows(); ++r) {
                for (std::size_t c = 0; c < h.cols(); ++c) act(r, c) = gelu(h(r, c));
            }
            trace.x_e[i] = matmul(act, transpose(params.w2[i]));
            trace.h[i] = std::move(h);
        }
        trace.x_in[i] = std::move(xin);
    }

    // combine in fixed (i, j) order
    trace.x_out = Matrix(n, d);
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (trace.assignment.slot_is_padded(i, j)) continue;
            const std::uint32_t t = trace.assignment.indices(i, j);
            const double g = trace.assignment.gates(i, j);
            if (g == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) {
                trace.x_out(t, c) += g * trace.x_e[i](j, c);
            }
        }
    }
    if (!trace.x_out.all_finite()) {
        throw std::runtime_error("forward: non-finite activations");
    }
}

}  // namespace

MoEForwardTrace forward(const TokenBatch& x, const MoEParams& params, RouterKind router,
                        const RouterConfig& cfg, const RouterOptions& opts,
                        const MoEHooks& hooks) {
    if (x.dim() != params.d()) {
        throw std::invalid_argument("forward: token dim != param dim");
    }
    if (cfg.tokens != x.tokens() || cfg.num_experts != params.num_experts()) {
        throw std::invalid_argument("forward: config does not match inputs");
    }
    MoEForwardTrace trace;
    trace.router = router;
    trace.hooks = hooks;
    trace.s = affinity(x.x, params.w_g);
    trace.assignment = route(trace.s, x, router, cfg.bucket_size(), opts, trace);
    if (hooks.force_gates_one) {
        for (std::size_t i = 0; i < trace.assignment.num_experts(); ++i) {
            for (std::size_t j = 0; j < trace.assignment.slots(); ++j) {
                if (!trace.assignment.slot_is_padded(i, j)) trace.assignment.gates(i, j) = 1.0;
            }
        }
    }
    run_experts_and_combine(x, params, hooks, trace);
    return trace;
}

MoEForwardTrace forward_pinned(const TokenBatch& x, const MoEParams& params,
                               const MoEForwardTrace& pin, const MoEHooks& hooks) {
    if (x.dim() != params.d()) {
        throw std::invalid_argument("forward_pinned: token dim != param dim");
    }
    MoEForwardTrace trace;
    trace.router = pin.router;
    trace.hooks = hooks;
    trace.token_choice = pin.token_choice;
    trace.s = affinity(x.x, params.w_g);
    trace.assignment = pin.assignment;
    trace.assignment.gates = gates_from_affinity(trace.s, trace.assignment, trace.router,
                                                 trace.token_choice);
    if (hooks.force_gates_one) {
        for (std::size_t i = 0; i < trace.assignment.num_experts(); ++i) {
            for (std::size_t j = 0; j < trace.assignment.slots(); ++j) {
                if (!trace.assignment.slot_is_padded(i, j)) trace.assignment.gates(i, j) = 1.0;
            }
        }
    }
    run_experts_and_combine(x, params, hooks, trace);
    return trace;
}

MoEGradients backward(const MoEForwardTrace& trace, const TokenBatch& x, const MoEParams& params,
                      const Matrix& grad_out) {
    const std::size_t n = x.tokens(), d = x.dim();
    const std::size_t e = trace.assignment.num_experts();
    const std::size_t k = trace.assignment.slots();
    if (grad_out.rows() != n || grad_out.cols() != d) {
        throw std::invalid_argument("backward: grad_out shape mismatch");
    }
    if (trace.s.rows() != n || trace.x_in.size() != e) {
        throw std::invalid_argument("backward: trace does not match inputs");
    }

    MoEGradients g;
    g.x = Matrix(n, d);
    g.w_g = Matrix(params.d(), params.num_experts());
    g.w1.assign(e, Matrix(params.d(), params.d_hidden()));
    g.w2.assign(e, Matrix(params.d(), params.d_hidden()));

    Matrix grad_gates(e, k);

    for (std::size_t i = 0; i < e; ++i) {
        // dL/dx_e and dL/dG from the combine
        Matrix grad_xe(k, d);
        for (std::size_t j = 0; j < k; ++j) {
            if (trace.assignment.slot_is_padded(i, j)) continue;
            const std::uint32_t t = trace.assignment.indices(i, j);
            const double gate = trace.assignment.gates(i, j);
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                grad_xe(j, c) = gate * grad_out(t, c);
                dot += grad_out(t, c) * trace.x_e[i](j, c);
            }
            grad_gates(i, j) = dot;
        }

        Matrix grad_xin;
        if (trace.hooks.identity_expert) {
            grad_xin = std::move(grad_xe);
        } else {
            // x_e = GeLU(h) * W2^T with h = x_in * W1
            Matrix grad_act = matmul(grad_xe, params.w2[i]);
            Matrix act(trace.h[i].rows(), trace.h[i].cols());
            for (std::size_t r = 0; r < act.rows(); ++r) {
                for (std::size_t c = 0; c < act.cols(); ++c) act(r, c) = gelu(trace.h[i](r, c));
            }
            g.w2[i] = matmul(transpose(grad_xe), act);
            Matrix grad_h(grad_act.rows(), grad_act.cols());
            for (std::size_t r = 0; r < grad_h.rows(); ++r) {
                for (std::size_t c = 0; c < grad_h.cols(); ++c) {
                    grad_h(r, c) = grad_act(r, c) * gelu_grad(trace.h[i](r, c));
                }
            }
            g.w1[i] = matmul(transpose(trace.x_in[i]), grad_h);
            grad_xin = matmul(grad_h, transpose(params.w1[i]));
        }

        for (std::size_t j = 0; j < k; ++j) {
            if (trace.assignment.slot_is_padded(i, j)) continue;
            const std::uint32_t t = trace.assignment.indices(i, j);
            for (std::size_t c = 0; c < d; ++c) g.x(t, c) += grad_xin(j, c);
        }
    }

    // gate path: dL/dG -> dL/dS -> softmax -> (W_g, X). Hash gates are
    // constants; the force-gates-one hook also cuts this path.
    if (trace.router != RouterKind::Hash && !trace.hooks.force_gates_one) {
        Matrix grad_s(n, trace.s.cols());
        switch (trace.router) {
            case RouterKind::ExpertChoice:
            case RouterKind::ExpertChoiceCapped:
                for (std::size_t i = 0; i < e; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                        if (trace.assignment.slot_is_padded(i, j)) continue;
                        grad_s(trace.assignment.indices(i, j), i) += grad_gates(i, j);
                    }
                }
                break;
            case RouterKind::TokenChoiceTop1:
            case RouterKind::TokenChoiceTop2: {
                const TokenChoiceResult& tc = *trace.token_choice;
                for (std::size_t t = 0; t < tc.claims.size(); ++t) {
                    const TokenClaims& c = tc.claims[t];
                    int survivors = 0;
                    for (std::uint32_t q = 0; q < c.count; ++q) survivors += c.slot[q] >= 0;
                    for (std::uint32_t q = 0; q < c.count; ++q) {
                        if (c.slot[q] < 0) continue;
                        double gg = grad_gates(c.experts[q], static_cast<std::size_t>(c.slot[q]));
                        if (c.count == 2 && survivors == 1) {
                            // surviving gate = s0 + s1: unit jacobian to both
                            grad_s(t, c.experts[0]) += gg;
                            grad_s(t, c.experts[1]) += gg;
                        } else {
                            grad_s(t, c.experts[q]) += gg;
                        }
                    }
                }
                break;
            }
            default:
                break;
        }
        Matrix grad_z = softmax_backward_rows(trace.s, grad_s);
        g.w_g = matmul(transpose(x.x), grad_z);
        Matrix gx_gate = matmul(grad_z, transpose(params.w_g));
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t c = 0; c < d; ++c) g.x(t, c) += gx_gate(t, c);
        }
    }

    return g;
}

MoEParams init_params(std::uint64_t seed, std::size_t d, std::size_t d_hidden, std::size_t e) {
    if (d < 1 || d_hidden < 1 || e < 1) {
        throw std::invalid_argument("init_params: dims must be >= 1");
    }
    SplitMix64 prng(seed);
    MoEParams p;
    p.w_g = Matrix(d, e);
    fill_uniform(p.w_g, prng, std::sqrt(6.0 / static_cast<double>(d + e)));
    const double lim = std::sqrt(6.0 / static_cast<double>(d + d_hidden));
    p.w1.assign(e, Matrix(d, d_hidden));
    p.w2.assign(e, Matrix(d, d_hidden));
    for (std::size_t i = 0; i < e; ++i) fill_uniform(p.w1[i], prng, lim);
    for (std::size_t i = 0; i < e; ++i) fill_uniform(p.w2[i], prng, lim);
    return p;
}

Matrix init_gating(std::uint64_t seed, std::size_t d, std::size_t e) {
    SplitMix64 prng(seed);
    Matrix w_g(d, e);
    fill_uniform(w_g, prng, std::sqrt(6.0 / static_cast<double>(d + e)));
    return w_g;
}

}  // namespace ecmoe

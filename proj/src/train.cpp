#include "ecmoe/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ecmoe/kernels.hpp"
#include "ecmoe/moe_layer.hpp"

namespace ecmoe {

namespace {

constexpr std::uint64_t kEvalSeedSalt = 0x6576616c62617463ull;  // "evalbatc"

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double mse_and_grad(const Matrix& x, const Matrix& x_out, const Matrix& targets,
                    Matrix* grad_out) {
    const std::size_t n = x.rows(), d = x.cols();
    const double inv = 1.0 / static_cast<double>(n * d);
    double loss = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x(t, j) + x_out(t, j) - targets(t, j);
            loss += diff * diff * inv;
            if (grad_out != nullptr) (*grad_out)(t, j) = 2.0 * diff * inv;
        }
    }
    return loss;
}

void sgd_step(Matrix& w, const Matrix& g, double lr) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) -= lr * g(i, j);
    }
}

}  // namespace

RouterKind parse_router(const std::string& name) {
    if (name == "ec") return RouterKind::ExpertChoice;
    if (name == "ec-capped") return RouterKind::ExpertChoiceCapped;
    if (name == "top1") return RouterKind::TokenChoiceTop1;
    if (name == "top2") return RouterKind::TokenChoiceTop2;
    if (name == "hash") return RouterKind::Hash;
    throw std::invalid_argument("unknown router '" + name +
                                "' (expected ec|ec-capped|top1|top2|hash)");
}

std::string router_name(RouterKind kind) {
    switch (kind) {
        case RouterKind::ExpertChoice: return "ec";
        case RouterKind::ExpertChoiceCapped: return "ec-capped";
        case RouterKind::TokenChoiceTop1: return "top1";
        case RouterKind::TokenChoiceTop2: return "top2";
        case RouterKind::Hash: return "hash";
    }
    return "?";
}

SyntheticSpec default_spec(std::uint64_t seed) {
    return SyntheticSpec{128, 16, 8, 1.0, seed};
}

RunReport train_toy(const RunConfig& config, const SyntheticSpec& spec) {
    if (spec.dim != config.d_model) {
        throw std::invalid_argument("train_toy: spec dim != d_model");
    }
    const RouterKind router = parse_router(config.router);
    const RouterConfig cfg = config.router_config(spec.tokens);
    const RouterOptions opts = config.router_options();
    const bool token_choice =
        router == RouterKind::TokenChoiceTop1 || router == RouterKind::TokenChoiceTop2;

    RunReport report;
    report.config = config;
    report.spec = spec;

    MoEParams params = init_params(config.seed, config.d_model, config.d_hidden, config.experts);
    const ToyTask task = ToyTask::make(spec);

    SyntheticSpec eval_spec = spec;
    eval_spec.seed = spec.seed ^ kEvalSeedSalt;
    const SyntheticBatch eval = gen_batch(eval_spec);
    const Matrix eval_targets = task.targets(eval);

    double gen_ms = 0.0, fwd_ms = 0.0, bwd_ms = 0.0, upd_ms = 0.0, eval_ms = 0.0;

    auto evaluate = [&](MoEForwardTrace* trace_out) {
        auto t0 = Clock::now();
        MoEForwardTrace trace = forward(eval.batch, params, router, cfg, opts);
        double loss = mse_and_grad(eval.batch.x, trace.x_out, eval_targets, nullptr);
        eval_ms += ms_since(t0);
        if (trace_out != nullptr) *trace_out = std::move(trace);
        return loss;
    };

    MoEForwardTrace eval_trace;
    report.loss.push_back(evaluate(&eval_trace));

    for (std::size_t step = 0; step < config.steps; ++step) {
        auto t0 = Clock::now();
        SyntheticSpec step_spec = spec;
        step_spec.seed = spec.seed + 1 + step;
        const SyntheticBatch data = gen_batch(step_spec);
        const Matrix targets = task.targets(data);
        gen_ms += ms_since(t0);

        t0 = Clock::now();
        MoEForwardTrace trace = forward(data.batch, params, router, cfg, opts);
        Matrix grad_out(data.batch.tokens(), data.batch.dim());
        double train_loss = mse_and_grad(data.batch.x, trace.x_out, targets, &grad_out);
        fwd_ms += ms_since(t0);

        t0 = Clock::now();
        MoEGradients grads = backward(trace, data.batch, params, grad_out);
        if (token_choice) {
            const TokenChoiceResult& tc = *trace.token_choice;
            train_loss += aux_load_balance_loss(trace.s, tc.per_expert_demand, tc.top_k,
                                                config.aux_loss_weight);
            Matrix grad_s = aux_load_balance_grad_s(trace.s, tc.per_expert_demand, tc.top_k,
                                                    config.aux_loss_weight);
            Matrix grad_z = softmax_backward_rows(trace.s, grad_s);
            Matrix gwg = matmul(transpose(data.batch.x), grad_z);
            for (std::size_t i = 0; i < gwg.rows(); ++i) {
                for (std::size_t j = 0; j < gwg.cols(); ++j) {
                    grads.w_g(i, j) += gwg(i, j);
                }
            }
        }
        bwd_ms += ms_since(t0);

        t0 = Clock::now();
        sgd_step(params.w_g, grads.w_g, config.lr);
        for (std::size_t i = 0; i < config.experts; ++i) {
            sgd_step(params.w1[i], grads.w1[i], config.lr);
            sgd_step(params.w2[i], grads.w2[i], config.lr);
        }
        upd_ms += ms_since(t0);

        double eval_loss = evaluate(step + 1 == config.steps ? &eval_trace : nullptr);
        report.loss.push_back(eval_loss);
        if (!std::isfinite(train_loss) || !std::isfinite(eval_loss)) {
            report.diverged = true;
            break;
        }
    }

    if (eval_trace.token_choice) {
        report.final_stats = compute_stats(*eval_trace.token_choice, cfg);
    } else {
        report.final_stats = compute_stats(eval_trace.assignment, cfg);
    }
    report.solver_residuals = eval_trace.solver_residuals;
    report.solver_iterations = eval_trace.solver_iterations;
    report.timings_ms = {{"gen", gen_ms}, {"forward", fwd_ms}, {"backward", bwd_ms},
                         {"update", upd_ms}, {"eval", eval_ms}};
    return report;
}

}  // namespace ecmoe

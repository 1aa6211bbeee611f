// ecmoe command line: synthetic batches, routing comparisons, the capped
// solver and the toy trainer. See README for usage.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecmoe/batch_io.hpp"
#include "ecmoe/capped_solver.hpp"
#include "ecmoe/kernels.hpp"
#include "ecmoe/metrics.hpp"
#include "ecmoe/moe_layer.hpp"
#include "ecmoe/report.hpp"
#include "ecmoe/routing.hpp"
#include "ecmoe/synthetic.hpp"
#include "ecmoe/train.hpp"

namespace {

using ecmoe::ordered_json;

struct CommonFlags {
    ecmoe::RunConfig config;
    ecmoe::SyntheticSpec spec = ecmoe::default_spec(1);
    std::string out;
    std::string csv_prefix;
    bool no_timestamp = false;
};

void add_router_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--router", f.config.router, "ec|ec-capped|top1|top2|hash");
    cmd->add_option("--experts", f.config.experts, "number of experts");
    cmd->add_option("--cf", f.config.capacity_factor, "capacity factor");
    cmd->add_option("--cap", f.config.cap_b, "max experts per token (ec-capped)");
    cmd->add_option("--lambda", f.config.lambda, "solver entropy weight");
    cmd->add_option("--max-iter", f.config.max_iter, "solver iteration budget");
    cmd->add_option("--tol", f.config.tol, "solver residual tolerance");
    cmd->add_option("--seed", f.config.seed, "seed for gating/params init");
    cmd->add_option("--aux", f.config.aux_loss_weight, "token-choice aux loss weight");
}

void add_gen_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--n", f.spec.tokens, "tokens per batch");
    cmd->add_option("--d", f.spec.dim, "token dimension");
    cmd->add_option("--clusters", f.spec.clusters, "number of clusters");
    cmd->add_option("--skew", f.spec.skew, "cluster size power-law exponent");
}

void write_report_files(const ecmoe::RunReport& report, const CommonFlags& f) {
    ecmoe::write_text_file(f.out, ecmoe::report_json(report, !f.no_timestamp).dump(2) + "\n");
    if (!f.csv_prefix.empty()) {
        ecmoe::write_csv_load(f.csv_prefix + "_load.csv", report.final_stats);
        ecmoe::write_csv_hist(f.csv_prefix + "_hist.csv", report.final_stats);
    }
}

// Routing + stats on one batch, no MoE layer. Used by route and compare.
ecmoe::RunReport route_report(const ecmoe::TokenBatch& batch, ecmoe::RunConfig config) {
    config.d_model = batch.dim();
    config.steps = 0;
    config.lr = 0.0;
    config.d_hidden = 0;

    const ecmoe::RouterKind kind = ecmoe::parse_router(config.router);
    const ecmoe::RouterConfig cfg = config.router_config(batch.tokens());
    const std::size_t k = cfg.bucket_size();
    const ecmoe::RouterOptions opts = config.router_options();

    ecmoe::RunReport report;
    report.config = config;

    const ecmoe::Matrix w_g = ecmoe::init_gating(config.seed, batch.dim(), config.experts);
    const ecmoe::Matrix s = ecmoe::affinity(batch.x, w_g);

    switch (kind) {
        case ecmoe::RouterKind::ExpertChoice: {
            report.final_stats = ecmoe::compute_stats(ecmoe::expert_choice_route(s, k), cfg);
            break;
        }
        case ecmoe::RouterKind::ExpertChoiceCapped: {
            ecmoe::CappedProblem p;
            p.scores = ecmoe::transpose(s);
            p.row_budget = k;
            p.token_cap = opts.cap_b;
            p.entropy_weight = opts.lambda;
            p.max_iters = opts.max_iters;
            p.tol = opts.tol;
            ecmoe::CappedSolution sol = ecmoe::solve_capped(p);
            report.solver_residuals = sol.residuals;
            report.solver_iterations = sol.iterations_used;
            report.final_stats =
                ecmoe::compute_stats(ecmoe::capped_selection(sol, s, k), cfg);
            break;
        }
        case ecmoe::RouterKind::TokenChoiceTop1:
        case ecmoe::RouterKind::TokenChoiceTop2: {
            std::size_t top_k = kind == ecmoe::RouterKind::TokenChoiceTop1 ? 1 : 2;
            report.final_stats =
                ecmoe::compute_stats(ecmoe::token_choice_route(s, top_k, k), cfg);
            break;
        }
        case ecmoe::RouterKind::Hash: {
            if (!batch.has_ids()) {
                throw std::runtime_error("hash router needs token ids in the batch file");
            }
            report.final_stats = ecmoe::compute_stats(
                ecmoe::hash_route(batch.ids, config.experts, k).assignment, cfg);
            break;
        }
    }
    return report;
}

int run(int argc, char** argv) {
    CLI::App app{"expert-choice MoE routing harness"};
    app.require_subcommand(1);

    CommonFlags f;
    std::string input;
    std::string routers_csv = "ec,top1,top2,hash";

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic batch file");
    add_gen_flags(gen, f);
    gen->add_option("--seed", f.spec.seed, "batch seed");
    gen->add_option("--out", f.out, "output .moeb path")->required();

    CLI::App* route = app.add_subcommand("route", "route one batch and report load stats");
    route->add_option("--input", input, "input .moeb path")->required();
    add_router_flags(route, f);
    route->add_option("--out", f.out, "output report path")->required();
    route->add_option("--csv", f.csv_prefix, "write CSV sidecars with this prefix");
    route->add_flag("--no-timestamp", f.no_timestamp, "omit timestamps for byte-stable output");

    CLI::App* compare = app.add_subcommand("compare", "route one batch under several routers");
    compare->add_option("--routers", routers_csv, "comma-separated router list");
    compare->add_option("--input", input, "input .moeb path (default: generate)");
    add_gen_flags(compare, f);
    compare->add_option("--gen-seed", f.spec.seed, "batch seed when generating");
    add_router_flags(compare, f);
    compare->add_option("--out", f.out, "output report path")->required();
    compare->add_flag("--no-timestamp", f.no_timestamp, "omit timestamps for byte-stable output");

    CLI::App* solve = app.add_subcommand("solve-capped", "run the capped-routing solver once");
    solve->add_option("--experts", f.config.experts, "number of experts");
    solve->add_option("--tokens", f.spec.tokens, "number of tokens");
    solve->add_option("--cap", f.config.cap_b, "max experts per token");
    solve->add_option("--cf", f.config.capacity_factor, "capacity factor");
    solve->add_option("--lambda", f.config.lambda, "entropy weight");
    solve->add_option("--max-iter", f.config.max_iter, "iteration budget");
    solve->add_option("--tol", f.config.tol, "residual tolerance");
    solve->add_option("--d", f.spec.dim, "token dimension");
    solve->add_option("--clusters", f.spec.clusters, "clusters");
    solve->add_option("--skew", f.spec.skew, "cluster skew");
    solve->add_option("--seed", f.config.seed, "seed");
    solve->add_option("--out", f.out, "output report path (stdout when omitted)");
    solve->add_flag("--no-timestamp", f.no_timestamp, "omit timestamps");

    CLI::App* train = app.add_subcommand("train", "toy SGD training run");
    add_router_flags(train, f);
    add_gen_flags(train, f);
    train->add_option("--d-hidden", f.config.d_hidden, "expert hidden dimension");
    train->add_option("--steps", f.config.steps, "SGD steps");
    train->add_option("--lr", f.config.lr, "learning rate");
    train->add_option("--out", f.out, "output report path")->required();
    train->add_option("--csv", f.csv_prefix, "write CSV sidecars with this prefix");
    train->add_flag("--no-timestamp", f.no_timestamp, "omit timestamps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    if (gen->parsed()) {
        ecmoe::write_moeb(f.out, ecmoe::gen_batch(f.spec).batch);
        return 0;
    }

    if (route->parsed()) {
        ecmoe::RunReport report = route_report(ecmoe::read_moeb(input), f.config);
        report.input_path = input;
        write_report_files(report, f);
        return 0;
    }

    if (compare->parsed()) {
        ecmoe::TokenBatch batch;
        bool from_file = !input.empty();
        if (from_file) {
            batch = ecmoe::read_moeb(input);
        } else {
            batch = ecmoe::gen_batch(f.spec).batch;
        }
        ordered_json runs = ordered_json::array();
        std::vector<std::string> routers;
        for (std::size_t pos = 0; pos < routers_csv.size();) {
            std::size_t comma = routers_csv.find(',', pos);
            if (comma == std::string::npos) comma = routers_csv.size();
            routers.push_back(routers_csv.substr(pos, comma - pos));
            pos = comma + 1;
        }
        for (const std::string& r : routers) {
            ecmoe::RunConfig config = f.config;
            config.router = r;
            ecmoe::RunReport report = route_report(batch, config);
            if (from_file) {
                report.input_path = input;
            } else {
                report.spec = f.spec;
            }
            runs.push_back(ecmoe::report_json(report, false));
        }
        ordered_json doc;
        if (!f.no_timestamp) {
            const auto now = std::chrono::system_clock::now();
            doc["generated_at_ms"] =
                std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch())
                    .count();
        }
        doc["runs"] = runs;
        ecmoe::write_text_file(f.out, doc.dump(2) + "\n");
        return 0;
    }

    if (solve->parsed()) {
        const ecmoe::SyntheticBatch data = ecmoe::gen_batch(f.spec);
        const ecmoe::Matrix w_g =
            ecmoe::init_gating(f.config.seed, f.spec.dim, f.config.experts);
        const ecmoe::Matrix s = ecmoe::affinity(data.batch.x, w_g);
        ecmoe::CappedProblem p;
        p.scores = ecmoe::transpose(s);
        p.row_budget = ecmoe::capacity(f.spec.tokens, f.config.capacity_factor, f.config.experts);
        p.token_cap = f.config.cap_b;
        p.entropy_weight = f.config.lambda;
        p.max_iters = f.config.max_iter;
        p.tol = f.config.tol;
        const ecmoe::CappedSolution sol = ecmoe::solve_capped(p);

        double near_integer = 0.0;
        for (std::size_t i = 0; i < sol.a.rows(); ++i) {
            for (std::size_t j = 0; j < sol.a.cols(); ++j) {
                double v = sol.a(i, j);
                if (std::min(std::abs(v), std::abs(v - 1.0)) <= 0.05) near_integer += 1.0;
            }
        }
        near_integer /= static_cast<double>(sol.a.size());

        ordered_json doc;
        f.config.d_model = f.spec.dim;
        doc["config"] = ecmoe::config_json(f.config);
        doc["synthetic"] = ecmoe::synthetic_json(f.spec);
        doc["row_budget"] = p.row_budget;
        doc["iterations"] = sol.iterations_used;
        doc["residuals"] = ecmoe::residuals_json(sol.residuals);
        doc["converged"] = sol.residuals.max_residual() < p.tol;
        doc["near_integer_fraction"] = near_integer;
        if (f.out.empty()) {
            std::cout << doc.dump(2) << "\n";
        } else {
            ecmoe::write_text_file(f.out, doc.dump(2) + "\n");
        }
        return 0;
    }

    if (train->parsed()) {
        f.config.d_model = f.spec.dim;
        ecmoe::RunReport report = ecmoe::train_toy(f.config, f.spec);
        write_report_files(report, f);
        if (report.diverged) {
            std::cerr << "training diverged after " << report.loss.size() - 1
                      << " steps; diagnostic report written to " << f.out << "\n";
            return 2;
        }
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    ecmoe::configure_threads_from_env();
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

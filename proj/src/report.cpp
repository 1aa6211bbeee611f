#include "ecmoe/report.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ecmoe {

ordered_json config_json(const RunConfig& c) {
    ordered_json j;
    j["router"] = c.router;
    j["experts"] = c.experts;
    j["capacity_factor"] = c.capacity_factor;
    j["cap_b"] = c.cap_b;
    j["lambda"] = c.lambda;
    j["max_iter"] = c.max_iter;
    j["tol"] = c.tol;
    j["d_model"] = c.d_model;
    j["d_hidden"] = c.d_hidden;
    j["steps"] = c.steps;
    j["lr"] = c.lr;
    j["seed"] = c.seed;
    j["aux_loss_weight"] = c.aux_loss_weight;
    return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.router = j.at("router").get<std::string>();
    c.experts = j.at("experts").get<std::size_t>();
    c.capacity_factor = j.at("capacity_factor").get<double>();
    c.cap_b = j.at("cap_b").get<std::size_t>();
    c.lambda = j.at("lambda").get<double>();
    c.max_iter = j.at("max_iter").get<std::size_t>();
    c.tol = j.at("tol").get<double>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_hidden = j.at("d_hidden").get<std::size_t>();
    c.steps = j.at("steps").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.aux_loss_weight = j.at("aux_loss_weight").get<double>();
    return c;
}

ordered_json synthetic_json(const SyntheticSpec& s) {
    ordered_json j;
    j["n"] = s.tokens;
    j["d"] = s.dim;
    j["clusters"] = s.clusters;
    j["skew"] = s.skew;
    j["seed"] = s.seed;
    return j;
}

SyntheticSpec synthetic_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    s.tokens = j.at("n").get<std::size_t>();
    s.dim = j.at("d").get<std::size_t>();
    s.clusters = j.at("clusters").get<std::size_t>();
    s.skew = j.at("skew").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

ordered_json stats_json(const LoadStats& st) {
    ordered_json j;
    j["per_expert_load"] = st.per_expert_load;
    j["experts_per_token_hist"] = st.experts_per_token_hist;
    j["mean_experts_per_token"] = st.mean_experts_per_token;
    j["over_capacity_ratio"] = st.over_capacity_ratio;
    j["per_expert_over_capacity_max"] = st.per_expert_over_capacity_max;
    j["dropped_token_fraction"] = st.dropped_token_fraction;
    return j;
}

ordered_json residuals_json(const Residuals& r) {
    ordered_json j;
    j["row_eq"] = r.row_eq;
    j["col_ineq"] = r.col_ineq;
    j["box"] = r.box;
    return j;
}

ordered_json report_json(const RunReport& r, bool with_timestamp) {
    ordered_json j;
    if (with_timestamp) {
        const auto now = std::chrono::system_clock::now();
        j["generated_at_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    }
    j["config"] = config_json(r.config);
    if (r.input_path.empty()) {
        j["synthetic"] = synthetic_json(r.spec);
    } else {
        j["input"] = r.input_path;
    }
    j["loss"] = r.loss;
    j["diverged"] = r.diverged;
    j["stats"] = stats_json(r.final_stats);
    if (r.solver_residuals) {
        j["solver_residuals"] = residuals_json(*r.solver_residuals);
        j["solver_iterations"] = r.solver_iterations;
    }
    if (with_timestamp) {
        ordered_json t;
        for (const auto& [phase, ms] : r.timings_ms) t[phase] = ms;
        j["timing_ms"] = t;
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path);
}

void write_csv_load(const std::string& path, const LoadStats& st) {
    std::ostringstream os;
    os << "expert_id,count\n";
    for (std::size_t i = 0; i < st.per_expert_load.size(); ++i) {
        os << i << "," << st.per_expert_load[i] << "\n";
    }
    write_text_file(path, os.str());
}

void write_csv_hist(const std::string& path, const LoadStats& st) {
    std::ostringstream os;
    os << "num_experts,token_count\n";
    for (std::size_t m = 0; m < st.experts_per_token_hist.size(); ++m) {
        os << m << "," << st.experts_per_token_hist[m] << "\n";
    }
    write_text_file(path, os.str());
}

}  // namespace ecmoe

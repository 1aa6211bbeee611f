#include "ecmoe/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "ecmoe/prng.hpp"

namespace ecmoe {

namespace {

constexpr std::uint64_t kTaskSeedSalt = 0x7461736b6d617073ull;  // "taskmaps"
constexpr double kNoiseSigma = 0.1;

std::vector<double> cluster_cdf(std::size_t clusters, double skew) {
    std::vector<double> cdf(clusters);
    double total = 0.0;
    for (std::size_t j = 0; j < clusters; ++j) {
        total += std::pow(static_cast<double>(j + 1), -skew);
        cdf[j] = total;
    }
    for (double& v : cdf) v /= total;
    cdf.back() = 1.0;
    return cdf;
}

}  // namespace

SyntheticBatch gen_batch(const SyntheticSpec& spec) {
    if (spec.tokens < 1 || spec.dim < 1 || spec.clusters < 1) {
        throw std::invalid_argument("gen_batch: tokens, dim and clusters must be >= 1");
    }
    if (spec.skew < 0.0) {
        throw std::invalid_argument("gen_batch: skew must be >= 0");
    }
    SplitMix64 prng(spec.seed);

    Matrix centers(spec.clusters, spec.dim);
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        for (std::size_t j = 0; j < spec.dim; ++j) centers(c, j) = prng.next_gaussian();
    }
    const std::vector<double> cdf = cluster_cdf(spec.clusters, spec.skew);

    SyntheticBatch out;
    out.batch.x = Matrix(spec.tokens, spec.dim);
    out.batch.ids.resize(spec.tokens);
    out.cluster_of.resize(spec.tokens);
    for (std::size_t t = 0; t < spec.tokens; ++t) {
        const double u = prng.next_double();
        std::size_t c = 0;
        while (c + 1 < spec.clusters && u >= cdf[c]) ++c;
        out.cluster_of[t] = static_cast<std::uint32_t>(c);
        out.batch.ids[t] = static_cast<std::uint32_t>(t);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            out.batch.x(t, j) = centers(c, j) + kNoiseSigma * prng.next_gaussian();
        }
    }
    return out;
}

ToyTask ToyTask::make(const SyntheticSpec& spec) {
    SplitMix64 prng(spec.seed ^ kTaskSeedSalt);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    ToyTask task;
    task.maps.assign(spec.clusters, Matrix(spec.dim, spec.dim));
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        for (std::size_t i = 0; i < spec.dim; ++i) {
            for (std::size_t j = 0; j < spec.dim; ++j) {
                task.maps[c](i, j) = scale * prng.next_gaussian();
            }
        }
    }
    return task;
}

Matrix ToyTask::targets(const SyntheticBatch& data) const {
    const std::size_t n = data.batch.tokens(), d = data.batch.dim();
    Matrix out(n, d);
    for (std::size_t t = 0; t < n; ++t) {
        const Matrix& m = maps[data.cluster_of[t]];
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) acc += data.batch.x(t, i) * m(i, j);
            out(t, j) = acc;
        }
    }
    return out;
}

}  // namespace ecmoe

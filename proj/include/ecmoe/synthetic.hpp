#ifndef ECMOE_SYNTHETIC_HPP
#define ECMOE_SYNTHETIC_HPP

#include <cstdint>
#include <vector>

#include "ecmoe/matrix.hpp"

namespace ecmoe {

// Clustered synthetic batches. Cluster sizes follow a power law with
// exponent = skew (skew 0 = uniform), which lets token-choice imbalance be
// produced on demand.
struct SyntheticSpec {
    std::size_t tokens = 0;
    std::size_t dim = 0;
    std::size_t clusters = 1;
    double skew = 0.0;
    std::uint64_t seed = 0;
};

struct SyntheticBatch {
    TokenBatch batch;                       // ids are 0..n-1
    std::vector<std::uint32_t> cluster_of;  // per token
};

// Tokens are cluster-center + N(0, 0.1^2) noise; centers i.i.d. standard
// normal. Deterministic given the seed.
SyntheticBatch gen_batch(const SyntheticSpec& spec);

// Per-cluster fixed random linear map; target row t = x_t * M_{cluster(t)}.
struct ToyTask {
    std::vector<Matrix> maps;  // clusters of d x d

    static ToyTask make(const SyntheticSpec& spec);
    Matrix targets(const SyntheticBatch& data) const;
};

}  // namespace ecmoe

#endif

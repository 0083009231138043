#pragma once

#include <cstddef>

#include "vern/graph.hpp"
#include "vern/ops.hpp"
#include "vern/tensor.hpp"

namespace vern {

// Graph convolution: ReLU(norm_adj * h * W + b).
struct GcnParams {
  Tensor weight;  // d_in x d_out
  Tensor bias;    // 1 x d_out
};

// Mean-aggregator GraphSAGE: ReLU([h_v | mean_{u in N(v)} h_u] * W + b).
struct SageParams {
  Tensor weight;  // 2*d_in x d_out, self rows first
  Tensor bias;    // 1 x d_out
};

// Two-layer perceptron: ReLU(h * W1 + b1) * W2 + b2.
struct MlpParams {
  Tensor w1;
  Tensor b1;
  Tensor w2;
  Tensor b2;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

GcnParams init_gcn(std::size_t d_in, std::size_t d_out, Rng& rng);
SageParams init_sage(std::size_t d_in, std::size_t d_out, Rng& rng);
MlpParams init_mlp(std::size_t d_in, std::size_t d_hidden, std::size_t d_out, Rng& rng);

Tensor gcn_forward(const Tensor& norm_adj, const Tensor& h, const GcnParams& p);

// N(v) comes from `neighbours` and never includes v; an isolated node
// aggregates to the zero vector.
Tensor sage_forward(const std::vector<std::vector<std::size_t>>& neighbours, const Tensor& h, const SageParams& p);
Tensor sage_forward(const Adjacency& adj, const Tensor& h, const SageParams& p);

Tensor mlp_forward(const Tensor& h, const MlpParams& p);

}  // namespace vern

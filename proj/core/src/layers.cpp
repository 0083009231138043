#include "vern/layers.hpp"

#include <cmath>
#include <random>
#include <string>

#include "vern/errors.hpp"

namespace vern {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return Tensor(std::move(w));
}

GcnParams init_gcn(std::size_t d_in, std::size_t d_out, Rng& rng) {
  return {glorot_uniform(d_in, d_out, rng), Tensor::zeros(1, d_out)};
}

SageParams init_sage(std::size_t d_in, std::size_t d_out, Rng& rng) {
  return {glorot_uniform(2 * d_in, d_out, rng), Tensor::zeros(1, d_out)};
}

MlpParams init_mlp(std::size_t d_in, std::size_t d_hidden, std::size_t d_out, Rng& rng) {
  MlpParams p;
  p.w1 = glorot_uniform(d_in, d_hidden, rng);
  p.b1 = Tensor::zeros(1, d_hidden);
  p.w2 = glorot_uniform(d_hidden, d_out, rng);
  p.b2 = Tensor::zeros(1, d_out);
  return p;
}

Tensor gcn_forward(const Tensor& norm_adj, const Tensor& h, const GcnParams& p) {
  if (norm_adj.rows() != norm_adj.cols() || norm_adj.rows() != h.rows()) {
    throw ShapeError("gcn_forward: norm_adj " + norm_adj.shape_string() + " does not match features " +
                     h.shape_string());
  }
  if (p.weight.rows() != h.cols()) {
    throw ShapeError("gcn_forward: weight " + p.weight.shape_string() + " does not accept features " +
                     h.shape_string());
  }
  // A (H W) is cheaper than (A H) W whenever d_out < d_in, and equal in value.
  return relu(add_row(matmul(norm_adj, matmul(h, p.weight)), p.bias));
}

Tensor sage_forward(const std::vector<std::vector<std::size_t>>& neighbours, const Tensor& h, const SageParams& p) {
  if (neighbours.size() != h.rows()) {
    throw ShapeError("sage_forward: graph has " + std::to_string(neighbours.size()) + " nodes, features " +
                     h.shape_string());
  }
  if (p.weight.rows() != 2 * h.cols()) {
    throw ShapeError("sage_forward: weight " + p.weight.shape_string() + " needs " + std::to_string(2 * h.cols()) +
                     " rows for features " + h.shape_string());
  }
  const Tensor agg = gather_mean(neighbours, h);
  return relu(add_row(matmul(concat_cols(h, agg), p.weight), p.bias));
}

Tensor sage_forward(const Adjacency& adj, const Tensor& h, const SageParams& p) {
  return sage_forward(adj.neighbours(), h, p);
}

Tensor mlp_forward(const Tensor& h, const MlpParams& p) {
  if (p.w1.rows() != h.cols() || p.w2.rows() != p.w1.cols()) {
    throw ShapeError("mlp_forward: input " + h.shape_string() + " with layers " + p.w1.shape_string() + " -> " +
                     p.w2.shape_string());
  }
  return add_row(matmul(relu(add_row(matmul(h, p.w1), p.b1)), p.w2), p.b2);
}

}  // namespace vern

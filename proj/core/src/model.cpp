#include "vern/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vern/errors.hpp"

namespace vern {

EncoderView VernParams::encoder(Branch branch) const {
  if (branch == Branch::a) return {&gcn_a, &shared_sage, &shared_mlp, nullptr};
  return {&gcn_b, &shared_sage, &shared_mlp, &skip_proj_b};
}

MutableEncoderView VernParams::encoder(Branch branch) {
  if (branch == Branch::a) return {&gcn_a, &shared_sage, &shared_mlp, nullptr};
  return {&gcn_b, &shared_sage, &shared_mlp, &skip_proj_b};
}

std::vector<std::pair<std::string, Tensor*>> VernParams::named() {
  return {
      {"gcn_a.weight", &gcn_a.weight},
      {"gcn_a.bias", &gcn_a.bias},
      {"gcn_b.weight", &gcn_b.weight},
      {"gcn_b.bias", &gcn_b.bias},
      {"shared_sage.weight", &shared_sage.weight},
      {"shared_sage.bias", &shared_sage.bias},
      {"shared_mlp.w1", &shared_mlp.w1},
      {"shared_mlp.b1", &shared_mlp.b1},
      {"shared_mlp.w2", &shared_mlp.w2},
      {"shared_mlp.b2", &shared_mlp.b2},
      {"skip_proj_b", &skip_proj_b},
      {"classifier.weight", &classifier_w},
      {"classifier.bias", &classifier_b},
  };
}

std::vector<std::pair<std::string, const Tensor*>> VernParams::named() const {
  auto mut = const_cast<VernParams*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(std::move(name), t);
  return out;
}

std::size_t VernParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : named()) total += t->size();
  return total;
}

VernParams init_params(const ModelDims& dims, std::uint64_t seed) {
  if (dims.hidden < 1 || dims.embed < 1 || dims.dim_a < 1 || dims.dim_b < 1) {
    throw ParameterError("init_params: all dimensions must be >= 1");
  }
  Rng rng(seed);
  VernParams p;
  p.dims = dims;
  p.seed = seed;
  p.gcn_a = init_gcn(dims.dim_a, dims.hidden, rng);
  p.gcn_b = init_gcn(dims.dim_b, dims.hidden, rng);
  p.shared_sage = init_sage(dims.hidden, dims.hidden, rng);
  p.shared_mlp = init_mlp(dims.hidden, dims.embed, dims.embed, rng);
  p.skip_proj_b = glorot_uniform(dims.dim_b, dims.embed, rng);
  p.classifier_w = glorot_uniform(dims.embed, 1, rng);
  p.classifier_b = Tensor::zeros(1, 1);
  return p;
}

VernParams track(const VernParams& p, Tape& tape) {
  VernParams out = p;
  for (auto& [name, t] : out.named()) *t = tape.leaf(*t, name);
  return out;
}

Tensor encoder_forward(const WsiGraph& g, const Tensor& x, Branch branch, const EncoderView& view, Mode mode,
                       Rng* rng) {
  if (view.gcn == nullptr || view.sage == nullptr || view.mlp == nullptr) {
    throw UsageError("encoder_forward: incomplete encoder view");
  }
  if (x.rows() != g.size() || x.cols() != view.gcn->weight.rows()) {
    throw ShapeError(std::string("encoder_forward: branch ") + (branch == Branch::a ? "A" : "B") + " expects " +
                     std::to_string(g.size()) + "x" + std::to_string(view.gcn->weight.rows()) + " features, got " +
                     x.shape_string());
  }
  if (mode == Mode::train && rng == nullptr) throw UsageError("encoder_forward: train mode needs a generator");

  const Tensor h1 = gcn_forward(g.norm_adj, x, *view.gcn);
  const Tensor h2 = sage_forward(g.neighbours, h1, *view.sage);
  Rng unused;
  const Tensor h3 = dropout(h2, kEncoderDropout, mode, rng != nullptr ? *rng : unused);
  Tensor h4 = mlp_forward(h3, *view.mlp);
  if (branch == Branch::b) {
    if (view.skip == nullptr) throw UsageError("encoder_forward: branch B requires a skip projection");
    h4 = add(h4, matmul(x, *view.skip));
  }
  return row_l2_normalize(h4, 1e-8);
}

Tensor encoder_forward(const WsiGraph& g, const Tensor& x, Branch branch, const VernParams& p, Mode mode, Rng* rng) {
  return encoder_forward(g, x, branch, p.encoder(branch), mode, rng);
}

VernOutput vern_forward(const WsiGraph& g, const EncoderView& view_a, const EncoderView& view_b,
                        const Tensor& classifier_w, const Tensor& classifier_b, Mode mode, Rng* rng) {
  VernOutput out;
  out.z_a = encoder_forward(g, g.feat_a, Branch::a, view_a, mode, rng);
  out.z_b = encoder_forward(g, g.feat_b, Branch::b, view_b, mode, rng);
  const Tensor fused = scale(add(out.z_a, out.z_b), 0.5);
  const Tensor pooled = mean_rows(fused);
  out.logit = add(matmul(pooled, classifier_w), classifier_b);
  out.prob = sigmoid(out.logit.item());
  out.contributions = contribution_scores(out.z_a.value(), out.z_b.value(), classifier_w.value());
  out.top_patches = top_k_indices(out.contributions, kTopPatches);
  return out;
}

VernOutput vern_forward(const WsiGraph& g, const VernParams& p, Mode mode, Rng* rng) {
  return vern_forward(g, p.encoder(Branch::a), p.encoder(Branch::b), p.classifier_w, p.classifier_b, mode, rng);
}

std::vector<double> contribution_scores(const Matrix& z_a, const Matrix& z_b, const Matrix& classifier_w) {
  if (z_a.rows() != z_b.rows() || z_a.cols() != z_b.cols() || classifier_w.rows() != z_a.cols() ||
      classifier_w.cols() != 1) {
    throw ShapeError("contribution_scores: inconsistent embedding/classifier shapes");
  }
  const Eigen::VectorXd raw = ((z_a * classifier_w) + (z_b * classifier_w)) / 2.0;
  std::vector<double> scores(static_cast<std::size_t>(raw.size()));
  if (raw.size() == 0) return scores;
  const double lo = raw.minCoeff();
  const double hi = raw.maxCoeff();
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    scores[static_cast<std::size_t>(i)] = hi > lo ? (raw(i) - lo) / (hi - lo) : 0.5;
  }
  return scores;
}

std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t count) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(count, idx.size()));
  return idx;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace vern

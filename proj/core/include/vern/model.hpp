#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vern/graph.hpp"
#include "vern/layers.hpp"
#include "vern/ops.hpp"
#include "vern/tensor.hpp"

namespace vern {

inline constexpr double kEncoderDropout = 0.2;
inline constexpr std::size_t kTopPatches = 9;

struct ModelDims {
  std::size_t dim_a = 1024;
  std::size_t dim_b = 768;
  std::size_t hidden = 512;
  std::size_t embed = 256;

  bool operator==(const ModelDims&) const = default;
};

enum class Branch { a, b };

// Parameters one encoder reads. Both branches point at the same SAGE and MLP
// objects in VernParams; tests may point them at separate copies.
struct EncoderView {
  const GcnParams* gcn = nullptr;
  const SageParams* sage = nullptr;
  const MlpParams* mlp = nullptr;
  const Tensor* skip = nullptr;  // branch B only
};

struct MutableEncoderView {
  GcnParams* gcn = nullptr;
  SageParams* sage = nullptr;
  MlpParams* mlp = nullptr;
  Tensor* skip = nullptr;
};

// All learnable weights of the Siamese graph encoder.
//
// Per branch: GCN (branch-specific, input dims differ) -> SAGE -> dropout ->
// MLP -> [skip projection, branch B] -> row L2 rescale. SAGE and MLP are a
// single object each, used by both branches, so their gradients accumulate
// contributions from both encoders.
struct VernParams {
  ModelDims dims;
  std::uint64_t seed = 0;

  GcnParams gcn_a;
  GcnParams gcn_b;
  SageParams shared_sage;
  MlpParams shared_mlp;
  Tensor skip_proj_b;   // dim_b x embed
  Tensor classifier_w;  // embed x 1
  Tensor classifier_b;  // 1 x 1

  EncoderView encoder(Branch branch) const;
  MutableEncoderView encoder(Branch branch);

  // Stable (name, tensor) listing used by checkpoints, the optimizer and
  // gradient collection.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  std::size_t parameter_count() const;
};

VernParams init_params(const ModelDims& dims, std::uint64_t seed);

// Copy of `p` whose tensors are leaves on `tape`. Shared components stay
// shared: each is a single leaf.
VernParams track(const VernParams& p, Tape& tape);

// Encoder for one feature family; `rng` drives dropout in train mode and may
// be null in eval mode.
Tensor encoder_forward(const WsiGraph& g, const Tensor& x, Branch branch, const EncoderView& view, Mode mode,
                       Rng* rng);
Tensor encoder_forward(const WsiGraph& g, const Tensor& x, Branch branch, const VernParams& p, Mode mode, Rng* rng);

struct VernOutput {
  Tensor logit;  // 1x1, tracked when the parameters are
  double prob = 0.0;
  std::vector<double> contributions;
  std::vector<std::size_t> top_patches;  // node indices
  Tensor z_a;
  Tensor z_b;

  double logit_value() const { return logit.item(); }
};

// Both encoders, per-node mean fusion, mean-pool readout, linear head.
VernOutput vern_forward(const WsiGraph& g, const VernParams& p, Mode mode, Rng* rng = nullptr);

// Same, with explicit encoder views (used to compare tied and untied weights).
VernOutput vern_forward(const WsiGraph& g, const EncoderView& view_a, const EncoderView& view_b,
                        const Tensor& classifier_w, const Tensor& classifier_b, Mode mode, Rng* rng = nullptr);

// Per-node logit contribution averaged over both encoders, min-max scaled to
// [0, 1]; constant raw scores map to 0.5.
std::vector<double> contribution_scores(const Matrix& z_a, const Matrix& z_b, const Matrix& classifier_w);

// Up to `count` indices by descending score, ties by lower index.
std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t count = kTopPatches);

double sigmoid(double z);

// Checkpoint: "VERN", u32 version, u32 + UTF-8 metadata (key=value lines with
// dims, seed and any extra hyperparameters), u32 parameter count, then per
// parameter: u32 + name, u32 rows, u32 cols, f64 row-major payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using CheckpointMeta = std::map<std::string, std::string>;

void save_checkpoint(const VernParams& p, const std::filesystem::path& path, const CheckpointMeta& extra = {});
VernParams load_checkpoint(const std::filesystem::path& path);
// Throws CheckpointError unless the stored dims equal `expected`.
VernParams load_checkpoint(const std::filesystem::path& path, const ModelDims& expected);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace vern

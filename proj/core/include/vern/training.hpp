#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vern/graph.hpp"
#include "vern/metrics.hpp"
#include "vern/model.hpp"
#include "vern/tensor.hpp"
#include "vern/wsi_data.hpp"

namespace vern {

struct TrainConfig {
  double lr = 0.001;
  double alpha = 0.9;  // RMSprop squared-gradient smoothing
  std::size_t epochs = 200;
  std::size_t batch_size = 1;
  double eps_rms = 1e-8;
  double pos_weight = 1.0;  // loss weight on positive slides
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  std::size_t threads = 1;  // folds trained concurrently
  double threshold = 0.5;
  ModelDims dims;

  void validate() const;
};

// Binary cross-entropy on a 1x1 logit, log(1 + exp(-s * z)) with s = +1 for
// label 1 and -1 for label 0, scaled by pos_weight on positives.
Tensor bce_loss(const Tensor& logit, int label, double pos_weight = 1.0);

// Squared-gradient accumulators, one per parameter, zero until first step.
struct RmsState {
  std::vector<Matrix> v;
};

// v <- alpha v + (1 - alpha) g^2;  theta <- theta - lr g / (sqrt(v) + eps).
void rmsprop_step(std::span<Tensor* const> params, std::span<const Matrix> grads, RmsState& state, double lr,
                  double alpha, double eps);
void rmsprop_step(VernParams& params, std::span<const Matrix> grads, RmsState& state, const TrainConfig& cfg);

// Gradient of every named parameter, in VernParams::named() order. `tracked`
// must come from track() on the tape that produced `grads`.
std::vector<Matrix> collect_gradients(const VernParams& tracked, const Gradients& grads);
std::vector<Matrix> collect_gradients(const VernParams& tracked, Gradients&& grads);

// Forward, backward and one optimizer step on one slide. Returns the loss.
double train_step(VernParams& params, const WsiGraph& g, RmsState& state, const TrainConfig& cfg, Rng& rng);

std::vector<double> predict_probs(const VernParams& params, std::span<const WsiGraph* const> graphs);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_auroc;
};

struct FoldResult {
  VernParams best;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  std::optional<double> best_val_auroc;
  std::vector<EpochLog> log;
};

// Trains from init_params(cfg.dims, seed). After each epoch the validation
// AUROC is computed and the best epoch is retained (ties keep the earlier).
FoldResult train_fold(std::span<const WsiGraph* const> train, std::span<const WsiGraph* const> val,
                      const TrainConfig& cfg, std::uint64_t seed);

struct SlidePrediction {
  std::string slide_id;
  std::size_t fold = 0;
  int label = 0;
  double prob = 0.0;
};

struct CvResult {
  FoldSplit split;
  std::vector<FoldResult> folds;
  std::vector<EvalReport> fold_reports;
  std::vector<SlidePrediction> val_predictions;
  Confusion pooled;
  // accuracy, precision, recall, f1, specificity, auroc, auprc over folds.
  std::map<std::string, MeanStd> summary;
};

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

// Stratified k-fold training over labelled graphs (slide ids must be unique).
CvResult run_cv(std::span<const WsiGraph> graphs, const TrainConfig& cfg);

// Per-fold metric means/stds from fold reports. Undefined AUROC/AUPRC values
// are left out of their mean.
std::map<std::string, MeanStd> summarize_folds(std::span<const EvalReport> reports);

void write_training_log(std::ostream& os, const CvResult& cv);
std::string format_cv_report(const CvResult& cv);

// Stops glibc from handing large freed blocks back to the kernel between
// steps. Gradient buffers are reallocated every step and the page faults
// cost about a quarter of a step. No-op elsewhere.
void keep_heap_warm();

// Loads every slide of a manifest into graphs (labels copied when present).
std::vector<WsiGraph> load_graphs(const Dataset& ds, std::size_t k = kDefaultNeighbours);

}  // namespace vern

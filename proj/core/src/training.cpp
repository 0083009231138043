#include "vern/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "vern/errors.hpp"

namespace vern {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::optional<double> auroc_of(const VernParams& params, std::span<const WsiGraph* const> graphs) {
  std::vector<int> labels;
  for (const auto* g : graphs) labels.push_back(g->label.value_or(0));
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) return std::nullopt;
  const auto probs = predict_probs(params, graphs);
  return roc_auc(probs, labels).auc;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ParameterError("lr must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  if (batch_size != 1) throw ParameterError("batch_size must be 1 (graphs differ in size)");
  if (!(eps_rms > 0.0)) throw ParameterError("eps_rms must be > 0");
  if (!(pos_weight > 0.0)) throw ParameterError("pos_weight must be > 0");
  if (folds < 2) throw ParameterError("folds must be >= 2");
  if (threads < 1) throw ParameterError("threads must be >= 1");
}

Tensor bce_loss(const Tensor& logit, int label, double pos_weight) {
  if (label != 0 && label != 1) throw ParameterError("bce_loss: label must be 0 or 1");
  const double z = logit.item();
  const double s = label == 1 ? 1.0 : -1.0;
  const double w = label == 1 ? pos_weight : 1.0;
  const double t = -s * z;
  Matrix value(1, 1);
  value(0, 0) = w * (std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))));
  if (!logit.tracked()) return Tensor(std::move(value));
  return logit.tape()->record("bce_loss", std::move(value), {&logit},
                              [z, label, w](const Matrix& g, std::span<Matrix* const> pg) {
                                if (pg[0]) (*pg[0])(0, 0) += g(0, 0) * w * (sigmoid(z) - label);
                              });
}

void rmsprop_step(std::span<Tensor* const> params, std::span<const Matrix> grads, RmsState& state, double lr,
                  double alpha, double eps) {
  if (params.size() != grads.size()) {
    throw ShapeError("rmsprop_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.v.empty()) {
    for (const Tensor* p : params) state.v.push_back(Matrix::Zero(p->value().rows(), p->value().cols()));
  }
  if (state.v.size() != params.size()) throw ShapeError("rmsprop_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& theta = params[i]->mutable_value();
    const Matrix& g = grads[i];
    Matrix& v = state.v[i];
    if (g.rows() != theta.rows() || g.cols() != theta.cols() || v.rows() != theta.rows() || v.cols() != theta.cols()) {
      throw ShapeError("rmsprop_step: shape mismatch at parameter " + std::to_string(i));
    }
    v.array() = alpha * v.array() + (1.0 - alpha) * g.array().square();
    theta.array() -= lr * g.array() / (v.array().sqrt() + eps);
    require_finite(theta, "rmsprop_step");
  }
}

void rmsprop_step(VernParams& params, std::span<const Matrix> grads, RmsState& state, const TrainConfig& cfg) {
  std::vector<Tensor*> slots;
  for (auto& [name, t] : params.named()) slots.push_back(t);
  rmsprop_step(slots, grads, state, cfg.lr, cfg.alpha, cfg.eps_rms);
}

std::vector<Matrix> collect_gradients(const VernParams& tracked, const Gradients& grads) {
  std::vector<Matrix> out;
  for (const auto& [name, t] : tracked.named()) out.push_back(grads.of(*t));
  return out;
}

std::vector<Matrix> collect_gradients(const VernParams& tracked, Gradients&& grads) {
  std::vector<Matrix> out;
  for (const auto& [name, t] : tracked.named()) out.push_back(grads.take(*t));
  return out;
}

double train_step(VernParams& params, const WsiGraph& g, RmsState& state, const TrainConfig& cfg, Rng& rng) {
  if (!g.label) throw TrainingError("train_step: slide '" + g.slide_id + "' has no label");
  std::vector<Matrix> grads;
  double loss_value = 0.0;
  {
    Tape tape;
    const VernParams tracked = track(params, tape);
    const VernOutput out = vern_forward(g, tracked, Mode::train, &rng);
    const Tensor loss = bce_loss(out.logit, *g.label, cfg.pos_weight);
    loss_value = loss.item();
    grads = collect_gradients(tracked, backward(tape, loss));
  }
  rmsprop_step(params, grads, state, cfg);
  return loss_value;
}

std::vector<double> predict_probs(const VernParams& params, std::span<const WsiGraph* const> graphs) {
  std::vector<double> probs;
  probs.reserve(graphs.size());
  for (const auto* g : graphs) probs.push_back(vern_forward(*g, params, Mode::eval).prob);
  return probs;
}

FoldResult train_fold(std::span<const WsiGraph* const> train, std::span<const WsiGraph* const> val,
                      const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  bool has[2] = {false, false};
  for (const auto* g : train) {
    if (!g->label) throw TrainingError("train_fold: slide '" + g->slide_id + "' has no label");
    has[*g->label] = true;
  }
  if (!has[0] || !has[1]) throw TrainingError("train_fold: training set must contain both classes");

  VernParams params = init_params(cfg.dims, seed);
  RmsState state;
  Rng rng(splitmix64(seed ^ 0xD40F0A7Eull));

  FoldResult result;
  result.best = params;
  result.best_epoch = 0;
  result.best_val_auroc = auroc_of(params, val);
  double best_score = -std::numeric_limits<double>::infinity();

  std::vector<const WsiGraph*> order(train.begin(), train.end());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (const auto* g : order) total += train_step(params, *g, state, cfg, rng);
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = total / static_cast<double>(order.size());
    entry.val_auroc = auroc_of(params, val);
    // Undefined AUROC ranks below every defined value.
    const double score = entry.val_auroc.value_or(-1.0);
    if (score > best_score) {
      best_score = score;
      result.best = params;
      result.best_epoch = epoch;
      result.best_val_auroc = entry.val_auroc;
    }
    result.log.push_back(entry);
  }
  return result;
}

void keep_heap_warm() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  return splitmix64(seed * 0x100000001B3ull + static_cast<std::uint64_t>(fold) + 1);
}

std::map<std::string, MeanStd> summarize_folds(std::span<const EvalReport> reports) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : reports) {
    values["accuracy"].push_back(r.scalars.accuracy);
    values["precision"].push_back(r.scalars.precision);
    values["recall"].push_back(r.scalars.recall);
    values["f1"].push_back(r.scalars.f1);
    values["specificity"].push_back(r.scalars.specificity);
    if (r.auroc) values["auroc"].push_back(*r.auroc);
    if (r.auprc) values["auprc"].push_back(*r.auprc);
  }
  std::map<std::string, MeanStd> out;
  for (const auto& [k, v] : values) out[k] = mean_std(v);
  return out;
}

CvResult run_cv(std::span<const WsiGraph> graphs, const TrainConfig& cfg) {
  cfg.validate();
  Dataset ds;
  for (const auto& g : graphs) {
    SlideEntry e;
    e.slide_id = g.slide_id;
    e.label = g.label;
    e.patch_count = g.size();
    ds.entries.push_back(std::move(e));
  }
  CvResult cv;
  cv.split = stratified_kfold(ds, cfg.folds, cfg.seed);
  if (cv.split.assignments.size() != graphs.size()) throw ValidationError("run_cv: slide ids must be unique");

  std::vector<std::vector<const WsiGraph*>> train_sets(cfg.folds), val_sets(cfg.folds);
  for (const auto& g : graphs) {
    const std::size_t f = cv.split.assignments.at(g.slide_id);
    for (std::size_t i = 0; i < cfg.folds; ++i) (i == f ? val_sets : train_sets)[i].push_back(&g);
  }

  cv.folds.resize(cfg.folds);
  std::vector<std::exception_ptr> errors(cfg.folds);
  const auto run_fold = [&](std::size_t i) {
    try {
      cv.folds[i] = train_fold(train_sets[i], val_sets[i], cfg, fold_seed(cfg.seed, i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (cfg.threads <= 1) {
    for (std::size_t i = 0; i < cfg.folds; ++i) run_fold(i);
  } else {
    std::size_t next = 0;
    while (next < cfg.folds) {
      std::vector<std::jthread> batch;
      for (std::size_t t = 0; t < cfg.threads && next < cfg.folds; ++t) batch.emplace_back(run_fold, next++);
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t i = 0; i < cfg.folds; ++i) {
    const auto probs = predict_probs(cv.folds[i].best, val_sets[i]);
    std::vector<int> labels;
    for (std::size_t j = 0; j < val_sets[i].size(); ++j) {
      labels.push_back(*val_sets[i][j]->label);
      cv.val_predictions.push_back({val_sets[i][j]->slide_id, i, labels.back(), probs[j]});
    }
    cv.fold_reports.push_back(evaluate(probs, labels, cfg.threshold));
    cv.pooled += cv.fold_reports.back().scalars.confusion;
  }
  cv.summary = summarize_folds(cv.fold_reports);
  return cv;
}

void write_training_log(std::ostream& os, const CvResult& cv) {
  os << "fold,epoch,train_loss,val_auroc\n";
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    for (const auto& e : cv.folds[f].log) {
      os << f << "," << e.epoch << "," << num(e.train_loss) << "," << (e.val_auroc ? num(*e.val_auroc) : "undefined")
         << "\n";
    }
  }
}

std::string format_cv_report(const CvResult& cv) {
  std::ostringstream os;
  os << "# cross-validation report\n";
  os << "folds: " << cv.folds.size() << "\n";
  for (const auto& [metric, ms] : cv.summary) {
    os << metric << "_mean: " << num(ms.mean) << "\n";
    os << metric << "_std: " << num(ms.std) << "\n";
  }
  os << "pooled_tp: " << cv.pooled.tp << "\n";
  os << "pooled_fp: " << cv.pooled.fp << "\n";
  os << "pooled_tn: " << cv.pooled.tn << "\n";
  os << "pooled_fn: " << cv.pooled.fn << "\n";
  for (std::size_t f = 0; f < cv.fold_reports.size(); ++f) {
    os << "\n";
    os << "fold_" << f << "_best_epoch: " << cv.folds[f].best_epoch << "\n";
    os << format_report(cv.fold_reports[f], "fold " + std::to_string(f));
  }
  return os.str();
}

std::vector<WsiGraph> load_graphs(const Dataset& ds, std::size_t k) {
  std::vector<WsiGraph> graphs;
  graphs.reserve(ds.entries.size());
  for (const auto& e : ds.entries) {
    const auto records = load_slide(e);
    graphs.push_back(build_wsi_graph(records, k, e.label, e.slide_id));
  }
  return graphs;
}

}  // namespace vern

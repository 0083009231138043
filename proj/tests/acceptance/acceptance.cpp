// Acceptance run: one PASS/FAIL line per criterion on stdout, diagnostics on
// stderr. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "vern/layers.hpp"
#include "vern/training.hpp"

using namespace vern;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<const WsiGraph*> ptrs(const std::vector<WsiGraph>& gs) {
  std::vector<const WsiGraph*> out;
  for (const auto& g : gs) out.push_back(&g);
  return out;
}

std::vector<int> labels_of(const std::vector<WsiGraph>& gs) {
  std::vector<int> y;
  for (const auto& g : gs) y.push_back(*g.label);
  return y;
}

struct SynthSet {
  std::vector<WsiGraph> graphs;
  std::map<std::string, SynthTruth> truth;
};

SynthSet make_synth(std::size_t n, double signal, std::uint64_t seed, std::size_t pmin = 20, std::size_t pmax = 40) {
  oracle::TempDir dir;
  SynthConfig cfg;
  cfg.n_slides = n;
  cfg.signal_strength = signal;
  cfg.seed = seed;
  cfg.patches_min = pmin;
  cfg.patches_max = pmax;
  SynthResult r = synth_dataset(cfg, dir.path());
  return {load_graphs(r.dataset), std::move(r.truth)};
}

bool same_slide(const WsiGraph& a, const WsiGraph& b) {
  return a.label == b.label && a.patch_ids == b.patch_ids && a.feat_a.value() == b.feat_a.value() &&
         a.feat_b.value() == b.feat_b.value();
}

// The planted directions are drawn from the dataset seed and each slide from
// (seed, index), so generating n_train + n_test slides gives exactly the
// n_train-slide dataset followed by unseen slides from the same distribution.
struct Split {
  std::vector<WsiGraph> train;
  SynthSet test;
};

Split make_split(std::size_t n_train, std::size_t n_test, double signal, std::uint64_t seed) {
  SynthSet all = make_synth(n_train + n_test, signal, seed);
  const SynthSet direct = make_synth(n_train, signal, seed);
  for (std::size_t i = 0; i < n_train; ++i) {
    if (!same_slide(all.graphs[i], direct.graphs[i])) {
      throw std::runtime_error("held-out split does not extend the training dataset");
    }
  }
  Split s;
  s.train = direct.graphs;
  s.test.graphs.assign(std::make_move_iterator(all.graphs.begin() + static_cast<std::ptrdiff_t>(n_train)),
                       std::make_move_iterator(all.graphs.end()));
  s.test.truth = std::move(all.truth);
  return s;
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelDims dims{6, 5, 4, 3};
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(5, 10);
  double worst = 0.0;
  std::string worst_param;
  std::size_t entries = 0, resampled = 0;
  for (int graph = 0; graph < 20; ++graph) {
    for (;;) {
      const WsiGraph g = oracle::random_graph(size(rng), dims, rng, graph % 2);
      const VernParams p = oracle::random_params(dims, rng);
      const auto res = oracle::check_vern_gradients(g, p, rng(), 1e-5);
      if (!res) {
        ++resampled;
        continue;
      }
      entries += res->entries;
      if (res->worst >= worst) {
        worst = res->worst;
        worst_param = res->worst_param;
      }
      break;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 120.0,
          "20 graphs, " + std::to_string(entries) + " entries, max rel err " + fmt("%.3g", worst) + " (" +
              worst_param + "), " + std::to_string(resampled) + " draws near a ReLU kink resampled, " +
              fmt("%.1f", secs) + " s"};
}

Outcome knn_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> size(1, 200);
  std::size_t mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = size(rng);
    std::vector<Point> pts;
    if (t % 3 == 0) {
      // Lattice points so equal distances are common.
      std::uniform_int_distribution<int> c(0, 12);
      for (std::size_t i = 0; i < n; ++i) pts.push_back({double(c(rng)), double(c(rng))});
    } else {
      pts = oracle::random_points(n, 1000.0, rng);
    }
    for (std::size_t k : {1, 3, 9}) {
      if (knn_graph(pts, k).edges != oracle::brute_knn(pts, k)) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30.0,
          "300 comparisons, " + std::to_string(mismatches) + " mismatches, " + fmt("%.2f", secs) + " s"};
}

Outcome layer_hand_values() {
  Adjacency two;
  two.n = 2;
  two.edges = {{0, 1}, {1, 0}};
  const Tensor a = normalized_adjacency(two);
  const GcnParams gcn{Tensor::identity(2), Tensor::zeros(1, 2)};
  const Matrix g = gcn_forward(a, Tensor::identity(2), gcn).value();
  const double gcn_err = (g - Matrix::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff();

  const SageParams select{Tensor::from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}}), Tensor::zeros(1, 2)};
  const Matrix s = sage_forward(std::vector<std::vector<std::size_t>>{{1}, {0}}, Tensor::from_rows({{1, 0}, {0, 2}}),
                                select)
                       .value();
  const double sage_err = std::max(std::abs(s(0, 0) - 1.0), std::abs(s(0, 1) - 2.0));
  return {gcn_err <= 1e-12 && sage_err <= 1e-12,
          "gcn err " + fmt("%.3g", gcn_err) + ", sage err " + fmt("%.3g", sage_err)};
}

Outcome permutation_invariance() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> size(5, 40);
  const ModelDims dims;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const WsiGraph g = oracle::random_graph(size(rng), dims, rng);
    const VernParams p = init_params(dims, rng());
    const double base = vern_forward(g, p, Mode::eval).logit_value();
    for (int k = 0; k < 50; ++k) {
      const WsiGraph moved = oracle::permute_graph(g, oracle::random_perm(g.size(), rng));
      worst = std::max(worst, std::abs(vern_forward(moved, p, Mode::eval).logit_value() - base));
    }
  }
  return {worst <= 1e-9, "500 permutations at default dims, max |dlogit| " + fmt("%.3g", worst)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> size(2, 50);
  std::uniform_int_distribution<int> grid(0, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double roc_worst = 0.0, pr_worst = 0.0;
  for (int t = 0; t < 200;) {
    const std::size_t n = size(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = t % 2 == 0 ? grid(rng) / 8.0 : u(rng);
      y[i] = coin(rng);
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(n)) continue;
    roc_worst = std::max(roc_worst, std::abs(roc_auc(s, y).auc - oracle::pairwise_auc(s, y)));
    pr_worst = std::max(pr_worst, std::abs(pr_auc(s, y).auc - oracle::sweep_pr_auc(s, y)));
    ++t;
  }
  return {roc_worst <= 1e-12 && pr_worst <= 1e-12,
          "200 sets, roc err " + fmt("%.3g", roc_worst) + ", pr err " + fmt("%.3g", pr_worst)};
}

Outcome rmsprop_step_and_determinism() {
  Tensor theta = Tensor::from_rows({{0.0}});
  std::vector<Tensor*> params = {&theta};
  const std::vector<Matrix> grads = {Tensor::from_rows({{1.0}}).value()};
  RmsState st;
  rmsprop_step(params, grads, st, 0.001, 0.9, 1e-8);
  const double delta = theta(0, 0);
  const double closed = -0.001 / (std::sqrt(0.1) + 1e-8);
  const double hand_err = std::abs(delta - closed);
  const double literal_err = std::abs(delta - (-0.00316228));

  // Two same-seed trajectories at default dims, compared after every step.
  const SynthSet data = make_synth(6, 2.0, 3, 10, 20);
  TrainConfig cfg;
  cfg.seed = 11;
  auto trajectory = [&] {
    VernParams p = init_params(cfg.dims, cfg.seed);
    RmsState state;
    Rng rng(cfg.seed);
    std::vector<std::vector<double>> snaps;
    for (int epoch = 0; epoch < 3; ++epoch) {
      for (const auto& g : data.graphs) {
        snaps.push_back({train_step(p, g, state, cfg, rng)});
        for (const auto& [name, t] : p.named()) {
          const auto d = t->data();
          snaps.back().insert(snaps.back().end(), d.begin(), d.end());
        }
      }
    }
    return snaps;
  };
  const auto first = trajectory();
  const auto second = trajectory();
  std::size_t differing = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (std::memcmp(first[i].data(), second[i].data(), first[i].size() * sizeof(double)) != 0) ++differing;
  }
  return {hand_err <= 1e-9 && literal_err <= 5e-9 && differing == 0,
          "delta " + fmt("%.10g", delta) + " (closed-form err " + fmt("%.3g", hand_err) + ", vs -0.00316228 " +
              fmt("%.3g", literal_err) + "), " + std::to_string(first.size()) + " steps, " +
              std::to_string(differing) + " differ"};
}

// Trained planted-signal model, shared by criteria 7 and 9.
struct PlantedRun {
  SynthSet test;
  std::vector<VernParams> folds;
};

PlantedRun* planted_run = nullptr;

// Logistic regression on per-slide mean features (both families), fitted by
// full-batch gradient descent with a small ridge penalty.
double mean_feature_oracle(const std::vector<WsiGraph>& train, const std::vector<WsiGraph>& test) {
  auto design = [](const std::vector<WsiGraph>& gs) {
    const auto& f = gs.front();
    Matrix x(static_cast<Eigen::Index>(gs.size()), f.feat_a.cols() + f.feat_b.cols());
    for (std::size_t i = 0; i < gs.size(); ++i) {
      x.row(i) << gs[i].feat_a.value().colwise().mean(), gs[i].feat_b.value().colwise().mean();
    }
    return x;
  };
  Matrix xtr = design(train), xte = design(test);
  const Eigen::RowVectorXd mu = xtr.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((xtr.rowwise() - mu).array().square().colwise().mean().sqrt() + 1e-12).matrix();
  xtr = ((xtr.rowwise() - mu).array().rowwise() / sd.array()).matrix();
  xte = ((xte.rowwise() - mu).array().rowwise() / sd.array()).matrix();

  Eigen::VectorXd y(xtr.rows());
  const auto ytr = labels_of(train);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = ytr[static_cast<std::size_t>(i)];
  Eigen::VectorXd w = Eigen::VectorXd::Zero(xtr.cols());
  double b = 0.0;
  const double n = static_cast<double>(xtr.rows());
  for (int it = 0; it < 3000; ++it) {
    const Eigen::VectorXd z = (xtr * w).array() + b;
    const Eigen::VectorXd r = z.unaryExpr([](double v) { return sigmoid(v); }) - y;
    w -= 0.05 * (xtr.transpose() * r / n + 1e-2 * w);
    b -= 0.05 * r.mean();
  }
  const Eigen::VectorXd s = (xte * w).array() + b;
  return roc_auc(std::vector<double>(s.data(), s.data() + s.size()), labels_of(test)).auc;
}

Outcome planted_learnability() {
  const auto t0 = std::chrono::steady_clock::now();
  Split split = make_split(200, 100, 2.0, 7);
  static PlantedRun run{std::move(split.test), {}};
  planted_run = &run;

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 7;
  const CvResult cv = run_cv(split.train, cfg);
  const auto test_ptrs = ptrs(run.test.graphs);
  const auto y = labels_of(run.test.graphs);
  std::vector<double> held, val;
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    run.folds.push_back(cv.folds[f].best);
    held.push_back(roc_auc(predict_probs(cv.folds[f].best, test_ptrs), y).auc);
    val.push_back(cv.folds[f].best_val_auroc.value_or(NAN));
    std::cerr << "  fold " << f << ": best epoch " << cv.folds[f].best_epoch << ", val auroc " << val.back()
              << ", held-out auroc " << held.back() << "\n";
  }
  const double secs = seconds_since(t0);
  const double mean_held = mean_std(held).mean;
  const double oracle_auc = mean_feature_oracle(split.train, run.test.graphs);
  return {mean_held >= 0.90 && secs < 1800.0,
          "mean held-out auroc " + fmt("%.4f", mean_held) + " (cv val " + fmt("%.4f", mean_std(val).mean) +
              ", mean-feature logistic oracle " + fmt("%.4f", oracle_auc) + "), " + fmt("%.0f", secs) + " s"};
}

Outcome null_signal() {
  std::vector<double> per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Split split = make_split(40, 100, 0.0, 500 + seed);
    const SynthSet& test = split.test;
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = seed;
    const CvResult cv = run_cv(split.train, cfg);
    std::vector<double> held;
    for (const auto& f : cv.folds) {
      held.push_back(roc_auc(predict_probs(f.best, ptrs(test.graphs)), labels_of(test.graphs)).auc);
    }
    per_seed.push_back(mean_std(held).mean);
    std::cerr << "  null seed " << seed << ": held-out auroc " << per_seed.back() << "\n";
  }
  const double mean = mean_std(per_seed).mean;
  return {mean >= 0.35 && mean <= 0.65, "mean held-out auroc over 5 seeds " + fmt("%.4f", mean)};
}

Outcome heatmap_truth() {
  if (planted_run == nullptr || planted_run->folds.empty()) {
    return {false, "needs the trained planted-signal model (criterion 7)"};
  }
  std::size_t hits = 0, total = 0;
  for (const auto& p : planted_run->folds) {
    for (const auto& g : planted_run->test.graphs) {
      if (*g.label != 1) continue;
      const auto& planted = planted_run->test.truth.at(g.slide_id).planted;
      const std::set<std::uint32_t> in(planted.begin(), planted.end());
      const auto c = vern_forward(g, p, Mode::eval).contributions;
      double ps = 0.0, bs = 0.0;
      std::size_t pn = 0, bn = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (in.count(g.patch_ids[i])) {
          ps += c[i];
          ++pn;
        } else {
          bs += c[i];
          ++bn;
        }
      }
      ++total;
      if (pn > 0 && bn > 0 && ps / double(pn) > bs / double(bn)) ++hits;
    }
  }
  const double frac = double(hits) / double(total);
  return {frac >= 0.8, std::to_string(hits) + "/" + std::to_string(total) +
                           " (fold, positive held-out slide) pairs rank planted above background, " +
                           fmt("%.3f", frac)};
}

Outcome format_round_trips() {
  oracle::TempDir dir;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_int_distribution<std::size_t> count(1, 12);
  std::size_t feature_fail = 0, ckpt_fail = 0;
  for (int t = 0; t < 50; ++t) {
    std::vector<PatchRecord> recs(count(rng));
    for (auto& r : recs) {
      r.patch_id = static_cast<std::uint32_t>(rng());
      r.x = u(rng) * 1e4;
      r.y = u(rng) * 1e4;
      r.feat_a.resize(kDimA);
      r.feat_b.resize(kDimB);
      for (auto& v : r.feat_a) v = u(rng);
      for (auto& v : r.feat_b) v = u(rng);
    }
    const fs::path f1 = dir / "a.wsgf", f2 = dir / "b.wsgf";
    write_feature_file(f1, recs);
    write_feature_file(f2, read_feature_file(f1));
    if (oracle::slurp(f1) != oracle::slurp(f2)) ++feature_fail;

    const ModelDims dims{count(rng), count(rng), count(rng), count(rng)};
    VernParams p = oracle::random_params(dims, rng);
    p.seed = rng();
    const CheckpointMeta meta{{"lr", fmt("%.17g", u(rng))}, {"trial", std::to_string(t)}};
    const fs::path c1 = dir / "a.ckpt", c2 = dir / "b.ckpt";
    save_checkpoint(p, c1, meta);
    save_checkpoint(load_checkpoint(c1), c2, read_checkpoint_meta(c1));
    if (oracle::slurp(c1) != oracle::slurp(c2)) ++ckpt_fail;
  }
  return {feature_fail == 0 && ckpt_fail == 0, "50 feature files (" + std::to_string(feature_fail) +
                                                   " differ), 50 checkpoints (" + std::to_string(ckpt_fail) +
                                                   " differ)"};
}

}  // namespace

int main(int argc, char** argv) {
  keep_heap_warm();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"knn oracle equivalence", knn_oracle},
      {"gcn and sage hand values", layer_hand_values},
      {"permutation invariance", permutation_invariance},
      {"metric oracles", metric_oracles},
      {"rmsprop step and determinism", rmsprop_step_and_determinism},
      {"planted-signal learnability", planted_learnability},
      {"null-signal sanity", null_signal},
      {"heatmap ground truth", heatmap_truth},
      {"format round-trips", format_round_trips},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
  // Heatmap scoring reuses the planted-signal model.
  if (only.count(9)) only.insert(7);

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

#include "vern/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vern/errors.hpp"

namespace vern {
namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels, std::string_view who) {
  if (scores.size() != labels.size()) {
    throw ShapeError(std::string(who) + ": " + std::to_string(scores.size()) + " scores but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw MetricError(std::string(who) + ": labels must be 0 or 1");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw MetricError(std::string(who) + ": non-finite score");
  }
}

// Indices by descending score; equal scores stay adjacent.
std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels, "roc_auc");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("roc_auc: undefined without both classes");

  // Midranks in ascending score order (1-based).
  std::vector<std::size_t> asc(scores.size());
  std::iota(asc.begin(), asc.end(), 0);
  std::stable_sort(asc.begin(), asc.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < asc.size();) {
    std::size_t j = i;
    while (j < asc.size() && scores[asc[j]] == scores[asc[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[asc[t]] == 1) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  RocResult out;
  out.auc = (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);

  const auto desc = order_descending(scores);
  out.points.push_back({0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < desc.size();) {
    std::size_t j = i;
    while (j < desc.size() && scores[desc[j]] == scores[desc[i]]) {
      (labels[desc[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    out.points.push_back({static_cast<double>(fp) / nn, static_cast<double>(tp) / np});
    i = j;
  }
  return out;
}

PrResult pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels, "pr_auc");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0) throw MetricError("pr_auc: undefined without positives");
  const double np = static_cast<double>(n_pos);

  const auto desc = order_descending(scores);
  PrResult out;
  out.points.push_back({0.0, 1.0});
  std::size_t tp = 0;
  std::size_t predicted = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < desc.size();) {
    std::size_t j = i;
    while (j < desc.size() && scores[desc[j]] == scores[desc[i]]) {
      if (labels[desc[j]] == 1) ++tp;
      ++predicted;
      ++j;
    }
    const double recall = static_cast<double>(tp) / np;
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    out.auc += (recall - prev_recall) * precision;
    out.points.push_back({recall, precision});
    prev_recall = recall;
    i = j;
  }
  return out;
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ScalarMetrics metrics_from_confusion(const Confusion& c) {
  ScalarMetrics m;
  m.confusion = c;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  m.accuracy = safe_div(d(c.tp + c.tn), d(c.total()));
  m.precision = safe_div(d(c.tp), d(c.tp + c.fp));
  m.recall = safe_div(d(c.tp), d(c.tp + c.fn));
  m.specificity = safe_div(d(c.tn), d(c.tn + c.fp));
  m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

ScalarMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores, labels, "confusion_metrics");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn) += 1;
    } else {
      (predicted ? c.fp : c.tn) += 1;
    }
  }
  return metrics_from_confusion(c);
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold) {
  EvalReport r;
  r.n = scores.size();
  r.threshold = threshold;
  r.scalars = confusion_metrics(scores, labels, threshold);
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos > 0 && n_pos < labels.size()) {
    auto roc = roc_auc(scores, labels);
    r.auroc = roc.auc;
    r.roc_points = std::move(roc.points);
  }
  if (n_pos > 0) {
    auto pr = pr_auc(scores, labels);
    r.auprc = pr.auc;
    r.pr_points = std::move(pr.points);
  }
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace vern

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vern {

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

struct RocResult {
  double auc = 0.0;
  // (false positive rate, true positive rate), (0,0) to (1,1), one point per
  // distinct score threshold.
  std::vector<CurvePoint> points;
};

struct PrResult {
  double auc = 0.0;
  // (recall, precision), starting at (0, 1), one point per distinct threshold.
  std::vector<CurvePoint> points;
};

inline constexpr std::string_view kPrConvention =
    "step-wise: sum over descending thresholds of (recall_t - recall_prev) * precision_t";

// AUC = P(score_pos > score_neg) + P(tie)/2 via midranks. Throws MetricError
// unless both classes are present.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

// Throws MetricError when there are no positives.
PrResult pr_auc(std::span<const double> scores, std::span<const int> labels);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  Confusion& operator+=(const Confusion& o);
};

struct ScalarMetrics {
  Confusion confusion;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double specificity = 0.0;
};

// Positive prediction iff score >= threshold. Zero denominators give 0.
ScalarMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);
ScalarMetrics metrics_from_confusion(const Confusion& c);

struct EvalReport {
  std::size_t n = 0;
  double threshold = 0.5;
  ScalarMetrics scalars;
  std::optional<double> auroc;  // empty when only one class is present
  std::optional<double> auprc;  // empty when there are no positives
  std::vector<CurvePoint> roc_points;
  std::vector<CurvePoint> pr_points;
};

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

// key: value text form; doubles printed with 17 significant digits so that
// parsing them back is exact.
std::string format_report(const EvalReport& report, std::string_view title);
void write_report(const EvalReport& report, std::string_view title, const std::string& path);

}  // namespace vern

#include <cstdio>
#include <fstream>
#include <sstream>

#include "vern/errors.hpp"
#include "vern/metrics.hpp"

namespace vern {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string points(const std::vector<CurvePoint>& pts) {
  std::string out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) out += ";";
    out += num(pts[i].x) + "," + num(pts[i].y);
  }
  return out;
}

}  // namespace

std::string format_report(const EvalReport& r, std::string_view title) {
  std::ostringstream os;
  const auto& c = r.scalars.confusion;
  os << "# " << title << "\n";
  os << "n_slides: " << r.n << "\n";
  os << "threshold: " << num(r.threshold) << "\n";
  os << "tp: " << c.tp << "\n";
  os << "fp: " << c.fp << "\n";
  os << "tn: " << c.tn << "\n";
  os << "fn: " << c.fn << "\n";
  os << "accuracy: " << num(r.scalars.accuracy) << "\n";
  os << "precision: " << num(r.scalars.precision) << "\n";
  os << "recall: " << num(r.scalars.recall) << "\n";
  os << "f1: " << num(r.scalars.f1) << "\n";
  os << "specificity: " << num(r.scalars.specificity) << "\n";
  os << "auroc: " << (r.auroc ? num(*r.auroc) : "undefined") << "\n";
  os << "auprc: " << (r.auprc ? num(*r.auprc) : "undefined") << "\n";
  os << "auprc_convention: " << kPrConvention << "\n";
  os << "roc_points: " << points(r.roc_points) << "\n";
  os << "pr_points: " << points(r.pr_points) << "\n";
  return os.str();
}

void write_report(const EvalReport& report, std::string_view title, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write report " + path);
  os << format_report(report, title);
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace vern

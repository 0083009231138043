#include "vern/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vern/errors.hpp"

namespace vern {
namespace {

Tape* common_tape(std::string_view op, std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->tracked()) continue;
    if (tape != nullptr && tape != t->tape()) throw UsageError(std::string(op) + ": inputs on different tapes");
    tape = t->tape();
  }
  return tape;
}

[[noreturn]] void shape_fail(std::string_view op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Matrix out = a.value() * b.value();
  Tape* tape = common_tape("matmul", {&a, &b});
  if (tape == nullptr) return Tensor(std::move(out));
  return tape->record("matmul", std::move(out), {&a, &b},
                      [a = a.detached(), b = b.detached()](const Matrix& g, std::span<Matrix* const> pg) {
                        if (pg[0]) pg[0]->noalias() += g * b.value().transpose();
                        if (pg[1]) pg[1]->noalias() += a.value().transpose() * g;
                      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("add", a, b);
  Matrix out = a.value() + b.value();
  Tape* tape = common_tape("add", {&a, &b});
  if (tape == nullptr) return Tensor(std::move(out));
  return tape->record("add", std::move(out), {&a, &b}, [](const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0]) *pg[0] += g;
    if (pg[1]) *pg[1] += g;
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) shape_fail("add_row", x, row);
  Matrix out = x.value().rowwise() + row.value().row(0);
  Tape* tape = common_tape("add_row", {&x, &row});
  if (tape == nullptr) return Tensor(std::move(out));
  return tape->record("add_row", std::move(out), {&x, &row}, [](const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0]) *pg[0] += g;
    if (pg[1]) *pg[1] += g.colwise().sum();
  });
}

Tensor scale(const Tensor& x, double s) {
  Matrix out = x.value() * s;
  if (!x.tracked()) return Tensor(std::move(out));
  return x.tape()->record("scale", std::move(out), {&x}, [s](const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0]) *pg[0] += g * s;
  });
}

Tensor relu(const Tensor& x) {
  Matrix out = x.value().cwiseMax(0.0);
  if (!x.tracked()) return Tensor(std::move(out));
  return x.tape()->record("relu", std::move(out), {&x},
                          [x = x.detached()](const Matrix& g, std::span<Matrix* const> pg) {
                            if (!pg[0]) return;
                            // Subgradient 0 at exactly 0.
                            *pg[0] += (x.value().array() > 0.0).select(g, 0.0).matrix();
                          });
}

Tensor row_l2_normalize(const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ParameterError("row_l2_normalize: eps must be positive");
  const Eigen::VectorXd norms = x.value().rowwise().norm();
  Eigen::VectorXd denom = norms.cwiseMax(eps);
  Matrix out = x.value().array().colwise() / denom.array();
  if (!x.tracked()) return Tensor(std::move(out));
  Tensor y(out);
  return x.tape()->record(
      "row_l2_normalize", std::move(out), {&x},
      [y, norms, denom, eps](const Matrix& g, std::span<Matrix* const> pg) {
        if (!pg[0]) return;
        const Matrix& yv = y.value();
        for (Eigen::Index i = 0; i < yv.rows(); ++i) {
          if (norms(i) >= eps) {
            // d(x/|x|) = (g - y (y.g)) / |x|
            const double dot = yv.row(i).dot(g.row(i));
            pg[0]->row(i) += (g.row(i) - dot * yv.row(i)) / denom(i);
          } else {
            pg[0]->row(i) += g.row(i) / eps;
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::bernoulli_distribution drop(p);
  Matrix mask(x.value().rows(), x.value().cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = drop(rng) ? 0.0 : keep_scale;
  Matrix out = x.value().cwiseProduct(mask);
  if (!x.tracked()) return Tensor(std::move(out));
  return x.tape()->record("dropout", std::move(out), {&x},
                          [mask = std::move(mask)](const Matrix& g, std::span<Matrix* const> pg) {
                            if (pg[0]) *pg[0] += g.cwiseProduct(mask);
                          });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  if (!x.tracked()) return Tensor(std::move(out));
  return x.tape()->record("sum", std::move(out), {&x}, [](const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0]) pg[0]->array() += g(0, 0);
  });
}

Tensor mean_rows(const Tensor& x) {
  if (x.rows() == 0) throw ShapeError("mean_rows: empty tensor " + x.shape_string());
  const double inv = 1.0 / static_cast<double>(x.rows());
  Matrix out = x.value().colwise().sum() * inv;
  if (!x.tracked()) return Tensor(std::move(out));
  return x.tape()->record("mean_rows", std::move(out), {&x}, [inv](const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0]) pg[0]->rowwise() += g.row(0) * inv;
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_fail("concat_cols", a, b);
  Matrix out(idx(a.rows()), idx(a.cols() + b.cols()));
  out.leftCols(idx(a.cols())) = a.value();
  out.rightCols(idx(b.cols())) = b.value();
  Tape* tape = common_tape("concat_cols", {&a, &b});
  if (tape == nullptr) return Tensor(std::move(out));
  const Eigen::Index ca = idx(a.cols());
  const Eigen::Index cb = idx(b.cols());
  return tape->record("concat_cols", std::move(out), {&a, &b},
                      [ca, cb](const Matrix& g, std::span<Matrix* const> pg) {
                        if (pg[0]) *pg[0] += g.leftCols(ca);
                        if (pg[1]) *pg[1] += g.rightCols(cb);
                      });
}

Tensor gather_mean(const std::vector<std::vector<std::size_t>>& groups, const Tensor& h) {
  const Eigen::Index d = idx(h.cols());
  Matrix out = Matrix::Zero(idx(groups.size()), d);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].empty()) continue;
    for (std::size_t u : groups[i]) {
      if (u >= h.rows()) {
        throw ShapeError("gather_mean: index " + std::to_string(u) + " out of range for " + h.shape_string());
      }
      out.row(idx(i)) += h.value().row(idx(u));
    }
    out.row(idx(i)) /= static_cast<double>(groups[i].size());
  }
  if (!h.tracked()) return Tensor(std::move(out));
  return h.tape()->record("gather_mean", std::move(out), {&h},
                          [groups](const Matrix& g, std::span<Matrix* const> pg) {
                            if (!pg[0]) return;
                            for (std::size_t i = 0; i < groups.size(); ++i) {
                              if (groups[i].empty()) continue;
                              const double w = 1.0 / static_cast<double>(groups[i].size());
                              for (std::size_t u : groups[i]) pg[0]->row(idx(u)) += w * g.row(idx(i));
                            }
                          });
}

}  // namespace vern

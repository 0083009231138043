#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "vern/tensor.hpp"

namespace vern {

enum class Mode { train, eval };

using Rng = std::mt19937_64;

// Every op below records itself on the tape of its tracked inputs (if any) and
// produces an untracked tensor otherwise. Outputs are checked for NaN/Inf.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
// x (n x d) plus a 1 x d row broadcast over all rows.
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& x, double s);
Tensor relu(const Tensor& x);

// Each row divided by max(||row||_2, eps).
Tensor row_l2_normalize(const Tensor& x, double eps = 1e-8);

// Inverted dropout. Eval mode (or p == 0) returns x itself.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng);

// Sum of all entries, 1x1.
Tensor sum(const Tensor& x);
// Column means over rows, 1 x cols.
Tensor mean_rows(const Tensor& x);
// [a | b] along columns.
Tensor concat_cols(const Tensor& a, const Tensor& b);

// Row i of the result is the mean of the rows of h listed in groups[i]; an
// empty group yields a zero row.
Tensor gather_mean(const std::vector<std::vector<std::size_t>>& groups, const Tensor& h);

}  // namespace vern

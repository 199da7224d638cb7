#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "roblc/stats.hpp"

namespace roblc {

// Replace exact zeros in a nonnegative count matrix by `pseudo`.
// Rejects rows with no positive entry (they carry no compositional information).
inline Matrix replace_zeros(const Matrix& counts, double pseudo = 0.5) {
  if (pseudo <= 0.0) throw std::invalid_argument("replace_zeros: pseudo-count must be positive");
  Matrix out = counts;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    bool any_positive = false;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double v = out(i, j);
      if (v < 0.0) throw std::invalid_argument("replace_zeros: negative entry at row " + std::to_string(i));
      if (v > 0.0) any_positive = true;
      if (v == 0.0) out(i, j) = pseudo;
    }
    if (!any_positive) throw std::invalid_argument("replace_zeros: all-zero row " + std::to_string(i));
  }
  return out;
}

// w_ij = d_ij / sum_j d_ij; rows of the result sum to 1.
inline Matrix total_sum_normalize(const Matrix& counts) {
  Matrix out(counts.rows(), counts.cols());
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    if ((counts.row(i).array() <= 0.0).any())
      throw std::invalid_argument("total_sum_normalize: nonpositive entry in row " + std::to_string(i));
    out.row(i) = counts.row(i) / counts.row(i).sum();
  }
  return out;
}

inline Matrix log_transform(const Matrix& compositions) {
  if ((compositions.array() <= 0.0).any())
    throw std::invalid_argument("log_transform: nonpositive entry");
  return compositions.array().log();
}

// Centered log-ratio: subtract each row's mean log. Rows of the result sum to 0.
inline Matrix clr_transform(const Matrix& compositions) {
  Matrix Z = log_transform(compositions);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) Z.row(i).array() -= Z.row(i).mean();
  return Z;
}

struct DesignResult {
  Matrix X;          // [Z N], every column at l2 norm sqrt(n)
  Vector col_scale;  // per-column divisor; beta_original = beta_fit / col_scale
};

namespace detail {
inline bool is_ones_column(const Vector& c) {
  return (c.array() == 1.0).all();
}
}  // namespace detail

// Assemble X = [Z N] and normalize each column to l2 norm sqrt(n).
// col_scale[j] = ||X_ysj|| / sqrt(n), so X_norm = X / col_scale columnwise and
// original-scale coefficients are beta_fit / col_scale.
// The all-ones intercept column (first column of N, when present) is exempt:
// it already has norm sqrt(n) and gets scale 1. Other columns of N are
// centered before normalization, which keeps the intercept interpretable.
inline DesignResult build_design(const Matrix& Z, const Matrix& N) {
  const Eigen::Index n = Z.rows() > 0 ? Z.rows() : N.rows();
  if (N.size() > 0 && N.rows() != n)
    throw std::invalid_argument("build_design: Z and N row counts differ");
  const Eigen::Index p = Z.cols();
  const Eigen::Index m = N.cols();

  DesignResult res;
  res.X.resize(n, p + m);
  if (p > 0) res.X.leftCols(p) = Z;
  if (m > 0) res.X.rightCols(m) = N;
  res.col_scale = Vector::Ones(p + m);

  const double target = std::sqrt(static_cast<double>(n));
  const bool has_intercept = m > 0 && detail::is_ones_column(N.col(0));
  for (Eigen::Index j = 0; j < p + m; ++j) {
    const bool is_intercept = has_intercept && j == p;
    if (is_intercept) continue;
    if (j >= p + 1 || (j >= p && !has_intercept)) {
      // non-compositional, non-intercept: center first
      res.X.col(j).array() -= res.X.col(j).mean();
    }
    const double norm = res.X.col(j).norm();
    if (norm <= 0.0)
      throw std::invalid_argument("build_design: zero-norm column " + std::to_string(j));
    res.col_scale[j] = norm / target;
    res.X.col(j) /= res.col_scale[j];
  }
  return res;
}

// One regression-ready compositional data set.
struct CompositionalDataset {
  Matrix counts;        // raw input (may be empty if compositions given directly)
  Matrix compositions;  // rows on the simplex
  Matrix Z;             // log or clr transform of compositions
  Matrix N;             // non-compositional block (first column may be intercept)
  Vector y;
  Matrix X;             // normalized [Z N]
  Vector col_scale;
  bool clr = false;
};

// counts -> zero replacement -> closure -> log (or clr) -> normalized design.
inline CompositionalDataset make_dataset(const Matrix& counts, const Matrix& N, const Vector& y,
                                         double pseudo = 0.5, bool use_clr = false) {
  if (y.size() != counts.rows())
    throw std::invalid_argument("make_dataset: response length does not match sample count");
  CompositionalDataset ds;
  ds.counts = counts;
  ds.compositions = total_sum_normalize(replace_zeros(counts, pseudo));
  ds.Z = use_clr ? clr_transform(ds.compositions) : log_transform(ds.compositions);
  ds.N = N;
  ds.y = y;
  ds.clr = use_clr;
  DesignResult d = build_design(ds.Z, ds.N);
  ds.X = std::move(d.X);
  ds.col_scale = std::move(d.col_scale);
  return ds;
}

}  // namespace roblc

#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "roblc/stats.hpp"

namespace roblc {

// Orthonormal basis of the column space of A, rank decided at tol*sigma_max.
inline Matrix orth_basis(const Matrix& A, double rank_tol = 1e-10) {
  if (A.size() == 0) return Matrix(A.rows(), 0);
  Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU);
  const double smax = svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > rank_tol * smax) ++r;
  return svd.matrixU().leftCols(r);
}

// P_C-perp = I - C (C'C)^-1 C', computed from an orthogonal decomposition of C.
// Rejects rank-deficient C.
inline Matrix projector_complement(const Matrix& C, double rank_tol = 1e-10) {
  const Eigen::Index d = C.rows();
  if (C.cols() == 0) return Matrix::Identity(d, d);
  Matrix Q = orth_basis(C, rank_tol);
  if (Q.cols() != C.cols())
    throw std::invalid_argument("projector_complement: constraint matrix is rank deficient");
  return Matrix::Identity(d, d) - Q * Q.transpose();
}

// Linear equality constraint C'beta = 0 together with its cached
// orthogonal-complement projector and the defining column groups.
struct ConstraintMatrix {
  Matrix C;                              // (p+m) x k
  std::vector<std::vector<int>> groups;  // k disjoint column index sets
  Matrix proj_comp;                      // P_C-perp

  int k() const { return static_cast<int>(C.cols()); }
  int dim() const { return static_cast<int>(C.rows()); }
};

// Groupwise zero-sum constraint from arbitrary (disjoint) column index sets
// over a design with `dim` columns. Columns in no group are unconstrained.
inline ConstraintMatrix build_constraint_from_groups(const std::vector<std::vector<int>>& groups,
                                                     int dim) {
  ConstraintMatrix cm;
  cm.groups = groups;
  cm.C = Matrix::Zero(dim, static_cast<Eigen::Index>(groups.size()));
  std::vector<char> seen(static_cast<std::size_t>(dim), 0);
  for (std::size_t r = 0; r < groups.size(); ++r) {
    if (groups[r].empty()) throw std::invalid_argument("build_constraint: empty group " + std::to_string(r));
    for (int j : groups[r]) {
      if (j < 0 || j >= dim) throw std::invalid_argument("build_constraint: column index out of range");
      if (seen[static_cast<std::size_t>(j)]) throw std::invalid_argument("build_constraint: groups overlap");
      seen[static_cast<std::size_t>(j)] = 1;
      cm.C(j, static_cast<Eigen::Index>(r)) = 1.0;
    }
  }
  cm.proj_comp = projector_complement(cm.C);
  return cm;
}

// Block subcomposition constraint: contiguous groups of sizes p_1..p_k over
// the first p columns, zero rows for the trailing m non-compositional columns.
// k = 1 with p_1 = p is the global zero-sum constraint C = 1_p.
inline ConstraintMatrix build_constraint(const std::vector<int>& group_sizes, int m) {
  if (group_sizes.empty()) throw std::invalid_argument("build_constraint: no groups");
  int p = 0;
  for (int s : group_sizes) {
    if (s < 1) throw std::invalid_argument("build_constraint: group sizes must be >= 1");
    p += s;
  }
  std::vector<std::vector<int>> groups;
  int at = 0;
  for (int s : group_sizes) {
    std::vector<int> g(static_cast<std::size_t>(s));
    std::iota(g.begin(), g.end(), at);
    groups.push_back(std::move(g));
    at += s;
  }
  return build_constraint_from_groups(groups, p + m);
}

// Constraint for a column-rescaled design. Enforcing (C/col_scale)' beta_fit = 0
// on the normalized problem is algebraically identical to C' beta_orig = 0,
// since beta_orig = beta_fit / col_scale.
inline ConstraintMatrix rescale_for_design(const ConstraintMatrix& cm, const Vector& col_scale) {
  if (col_scale.size() != cm.C.rows())
    throw std::invalid_argument("rescale_for_design: col_scale length mismatch");
  ConstraintMatrix out;
  out.groups = cm.groups;
  out.C = cm.C.array().colwise() / col_scale.array();
  out.proj_comp = projector_complement(out.C);
  return out;
}

}  // namespace roblc

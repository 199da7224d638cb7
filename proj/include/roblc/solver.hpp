#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "roblc/constraint.hpp"
#include "roblc/penalty.hpp"
#include "roblc/rng.hpp"
#include "roblc/stats.hpp"

namespace roblc {

struct SolverOptions {
  double inner_tol = 1e-6;
  int inner_max_iter = 1000;
  double outer_tol = 1e-6;
  int outer_max_iter = 200;
  double spectral_margin = 1.05;
  double power_tol = 1e-6;
  int power_max_iter = 10000;
};

// ---------------------------------------------------------------------------
// Augmented system of the equality-constrained subproblem.
//
//   ytil = [y; -sqrt(n) eta],  Xtil = [[X P_C-perp, sqrt(n) I]; [sqrt(n) C', 0]]
//
// so that 1/2 ||ytil - Xtil thetatil||^2 equals the data-fit term plus the
// augmented-Lagrangian penalty (n/2)||C'theta + eta||^2.
// ---------------------------------------------------------------------------

inline std::pair<Matrix, Vector> assemble_augmented(const Matrix& X, const Matrix& proj_comp,
                                                    const Matrix& C, const Vector& eta,
                                                    const Vector& y) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const Eigen::Index k = C.cols();
  if (proj_comp.rows() != d || C.rows() != d || eta.size() != k || y.size() != n)
    throw std::invalid_argument("assemble_augmented: inconsistent dimensions");
  const double sn = std::sqrt(static_cast<double>(n));
  Matrix Xt = Matrix::Zero(n + k, d + n);
  Xt.topLeftCorner(n, d) = X * proj_comp;
  Xt.topRightCorner(n, n) = sn * Matrix::Identity(n, n);
  Xt.bottomLeftCorner(k, d) = sn * C.transpose();
  Vector yt(n + k);
  yt.head(n) = y;
  yt.tail(k) = -sn * eta;
  return {std::move(Xt), std::move(yt)};
}

namespace detail {

// Largest eigenvalue of a symmetric PSD operator by power iteration with a
// deterministic all-ones start, relative tolerance on the Rayleigh quotient.
template <typename MatVec>
double power_lambda_max(Eigen::Index dim, MatVec&& apply, double tol, int max_iter) {
  if (dim == 0) return 0.0;
  Vector v = Vector::Constant(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  double lam = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = apply(v);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    const double lam_new = v.dot(w);
    v = w / wn;
    if (it > 0 && std::abs(lam_new - lam) <= tol * std::abs(lam_new)) return lam_new;
    lam = lam_new;
  }
  return lam;
}

}  // namespace detail

// k0 = margin * lambda_max(Xtil' Xtil). The ISTA step size is 1/k0; the margin
// keeps the majorization valid under power-iteration truncation error.
inline double spectral_bound(const Matrix& Xtil, double margin = 1.05, double tol = 1e-6,
                             int max_iter = 10000) {
  if (Xtil.size() == 0) throw std::invalid_argument("spectral_bound: empty matrix");
  const double lam = detail::power_lambda_max(
      Xtil.cols(), [&](const Vector& v) -> Vector { return Xtil.transpose() * (Xtil * v); }, tol,
      max_iter);
  return margin * lam;
}

// One proximal-gradient pass on  1/2 ||ytil - Xtil th||^2 + P_lambda(th):
//   th <- prox_{P_lambda / k0}[ Xtil'ytil / k0 + (I - Xtil'Xtil / k0) th ].
// Stops when the iterate change drops below tol (relative) or max_iter hits.
// Requires k0 >= lambda_max(Xtil'Xtil) for the descent property.
inline Vector ista_inner(const Matrix& Xtil, const Vector& ytil, const PenaltySpec& spec,
                         double lam, double k0, Vector theta, double tol = 1e-6,
                         int max_iter = 1000, int* iters_out = nullptr) {
  if (theta.size() != Xtil.cols())
    throw std::invalid_argument("ista_inner: start vector length mismatch");
  int done = max_iter;
  for (int j = 1; j <= max_iter; ++j) {
    const Vector t = theta + Xtil.transpose() * (ytil - Xtil * theta) / k0;
    Vector next = apply_prox_scaled(spec, t, lam, k0);
    if (!next.allFinite())
      throw std::runtime_error("ista_inner: non-finite iterate at inner iteration " +
                               std::to_string(j));
    const double change = (next - theta).lpNorm<Eigen::Infinity>();
    theta = std::move(next);
    if (change <= tol * std::max(1.0, theta.lpNorm<Eigen::Infinity>())) {
      done = j;
      break;
    }
  }
  if (iters_out) *iters_out = done;
  return theta;
}

namespace detail {

// Cached quadratic form of the augmented system for one (X, C) pair. Re-used
// across the whole lambda path and all outer iterations: only Xtil'ytil
// depends on the dual variable, and only through a rank-k update.
struct AlCore {
  int n = 0, d = 0, k = 0;
  bool with_gamma = true;
  double sqrt_n = 0.0;
  Matrix XP;         // X * P_C-perp
  Matrix proj;       // P_C-perp
  Matrix Ceff;       // d x k
  Matrix G;          // Xtil'Xtil
  Vector xty0;       // Xtil'ytil at eta = 0
  Vector y;
  double k0 = 0.0;

  Eigen::Index dim() const { return d + (with_gamma ? n : 0); }

  static AlCore build(const Matrix& X, const ConstraintMatrix& cm, const Vector& y,
                      bool with_gamma, const SolverOptions& opts = {}) {
    AlCore S;
    S.n = static_cast<int>(X.rows());
    S.d = static_cast<int>(X.cols());
    S.k = cm.k();
    S.with_gamma = with_gamma;
    S.sqrt_n = std::sqrt(static_cast<double>(S.n));
    S.proj = cm.proj_comp;
    S.Ceff = cm.C;
    S.y = y;
    S.XP = X * cm.proj_comp;
    Matrix G11 = S.XP.transpose() * S.XP;
    if (S.k > 0) G11 += static_cast<double>(S.n) * (cm.C * cm.C.transpose());
    if (with_gamma) {
      S.G.setZero(S.d + S.n, S.d + S.n);
      S.G.topLeftCorner(S.d, S.d) = G11;
      S.G.topRightCorner(S.d, S.n) = S.sqrt_n * S.XP.transpose();
      S.G.bottomLeftCorner(S.n, S.d) = S.sqrt_n * S.XP;
      S.G.bottomRightCorner(S.n, S.n) =
          static_cast<double>(S.n) * Matrix::Identity(S.n, S.n);
      S.xty0.resize(S.d + S.n);
      S.xty0.head(S.d) = S.XP.transpose() * y;
      S.xty0.tail(S.n) = S.sqrt_n * y;
    } else {
      S.G = std::move(G11);
      S.xty0 = S.XP.transpose() * y;
    }
    S.k0 = opts.spectral_margin *
           power_lambda_max(
               S.G.rows(), [&](const Vector& v) -> Vector { return S.G.selfadjointView<Eigen::Lower>() * v; },
               opts.power_tol, opts.power_max_iter);
    if (S.k0 <= 0.0) S.k0 = 1.0;
    return S;
  }

  Vector xty(const Vector& eta) const {
    Vector b = xty0;
    if (k > 0) b.head(d).noalias() -= static_cast<double>(n) * (Ceff * eta);
    return b;
  }

  Vector ista(const PenaltySpec& spec, double lam, Vector theta, const Vector& b,
              const SolverOptions& opts, int* iters_out) const {
    int done = opts.inner_max_iter;
    for (int j = 1; j <= opts.inner_max_iter; ++j) {
      Vector t = theta + (b - G.selfadjointView<Eigen::Lower>() * theta) / k0;
      Vector next = apply_prox_scaled(spec, t, lam, k0);
      if (!next.allFinite())
        throw std::runtime_error("ista: non-finite iterate at inner iteration " +
                                 std::to_string(j));
      const double change = (next - theta).lpNorm<Eigen::Infinity>();
      theta = std::move(next);
      if (change <= opts.inner_tol * std::max(1.0, theta.lpNorm<Eigen::Infinity>())) {
        done = j;
        break;
      }
    }
    if (iters_out) *iters_out = done;
    return theta;
  }

  // Objective the iteration descends, evaluated at the feasible projection:
  //   1/2 ||y - X beta - sqrt(n) gamma||^2 + P_lambda([beta; gamma]).
  double objective_at(const PenaltySpec& spec, double lam, const Vector& theta) const {
    Vector beta = proj * theta.head(d);
    Vector resid = y - XP * theta.head(d);
    Vector delta(dim());
    delta.head(d) = beta;
    if (with_gamma) {
      resid -= sqrt_n * theta.tail(n);
      delta.tail(n) = theta.tail(n);
    }
    return 0.5 * resid.squaredNorm() + penalty_value(spec, delta, lam);
  }
};

struct DualDescentResult {
  Vector theta;
  Vector eta;
  std::vector<double> obj_trace;
  int inner_iters = 0;
  int outer_iters = 0;
  bool converged = false;
  double feasibility = 0.0;
};

// Dual-descent loop: alternate the ISTA primal solve with the multiplier
// update eta <- eta + C'theta until ||C'theta||_inf <= outer_tol.
// `restart` (hard-ridge) re-seeds every inner solve from the robust
// initializer; otherwise inner solves warm-start from the running iterate.
inline DualDescentResult dual_descent_core(const AlCore& S, const PenaltySpec& spec, double lam,
                                           Vector theta0, const Vector* restart,
                                           const SolverOptions& opts, bool record_trace = true) {
  DualDescentResult r;
  r.theta = std::move(theta0);
  r.eta = Vector::Zero(S.k);
  for (int i = 0; i < opts.outer_max_iter; ++i) {
    const Vector b = S.xty(r.eta);
    int it = 0;
    r.theta = S.ista(spec, lam, restart ? *restart : r.theta, b, opts, &it);
    r.inner_iters += it;
    r.outer_iters = i + 1;
    const Vector viol = S.k > 0 ? Vector(S.Ceff.transpose() * r.theta.head(S.d)) : Vector();
    r.feasibility = S.k > 0 ? viol.lpNorm<Eigen::Infinity>() : 0.0;
    if (record_trace) r.obj_trace.push_back(S.objective_at(spec, lam, r.theta));
    if (r.feasibility <= opts.outer_tol) {
      r.converged = true;
      break;
    }
    r.eta += viol;
  }
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public fit interface
// ---------------------------------------------------------------------------

struct RegressionProblem {
  Matrix X;                     // normalized design, columns at norm sqrt(n)
  Vector y;
  ConstraintMatrix constraint;  // effective constraint for this design
  PenaltySpec penalty;
  Vector col_scale;             // empty means ones

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
};

struct FitResult {
  Vector beta_fit;       // P_C-perp * theta block, normalized-design scale
  Vector beta_original;  // beta_fit / col_scale
  Vector gamma;          // mean shift in response units (sqrt(n) * gamma block)
  Vector theta_tilde;    // raw final stacked iterate [theta; gamma_fit]
  Vector eta;            // dual variables
  double lambda = 0.0;
  double k0 = 0.0;
  std::vector<double> obj_trace;
  int inner_iters = 0;
  int outer_iters = 0;
  bool converged = false;
  bool zero_solution = false;
  double feasibility = 0.0;  // ||C'theta||_inf at exit
  std::string diagnostic;

  std::vector<int> outlier_set() const {
    std::vector<int> out;
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
      if (gamma[i] != 0.0) out.push_back(static_cast<int>(i));
    return out;
  }
};

namespace detail {

inline FitResult finalize_fit(const AlCore& S, const RegressionProblem& prob, double lam,
                              DualDescentResult&& dd) {
  FitResult f;
  f.lambda = lam;
  f.k0 = S.k0;
  f.beta_fit = S.proj * dd.theta.head(S.d);
  f.beta_original = prob.col_scale.size() == S.d
                        ? Vector(f.beta_fit.array() / prob.col_scale.array())
                        : f.beta_fit;
  f.gamma = S.with_gamma ? Vector(S.sqrt_n * dd.theta.tail(S.n)) : Vector::Zero(S.n);
  f.theta_tilde = std::move(dd.theta);
  f.eta = std::move(dd.eta);
  f.obj_trace = std::move(dd.obj_trace);
  f.inner_iters = dd.inner_iters;
  f.outer_iters = dd.outer_iters;
  f.converged = dd.converged;
  f.feasibility = dd.feasibility;
  f.zero_solution = f.converged && f.theta_tilde.lpNorm<Eigen::Infinity>() == 0.0;
  if (!f.converged)
    f.diagnostic = "dual descent stopped at outer iteration cap with ||C'theta||_inf = " +
                   std::to_string(f.feasibility);
  return f;
}

}  // namespace detail

// Full robust fit at one lambda. `init` is the stacked [beta; gamma/sqrt(n)]
// starting point. Hard-ridge requires it (every inner solve restarts there);
// the convex kinds warm-start from it when given and from zero otherwise.
inline FitResult dual_descent_fit(const RegressionProblem& prob, double lam,
                                  const Vector* init = nullptr, const SolverOptions& opts = {}) {
  const auto S = detail::AlCore::build(prob.X, prob.constraint, prob.y, true, opts);
  if (prob.penalty.dim() != S.dim())
    throw std::invalid_argument("dual_descent_fit: penalty dimension mismatch");
  if (init && init->size() != S.dim())
    throw std::invalid_argument("dual_descent_fit: init length mismatch");
  const bool hard = prob.penalty.kind == PenaltyKind::HardRidge;
  if (hard && !init)
    throw std::invalid_argument("dual_descent_fit: hard-ridge penalty requires a robust initializer");
  Vector theta0 = init ? *init : Vector::Zero(S.dim());
  auto dd = detail::dual_descent_core(S, prob.penalty, lam, std::move(theta0),
                                      hard ? init : nullptr, opts);
  return detail::finalize_fit(S, prob, lam, std::move(dd));
}

// Minimum-norm least squares subject to C'beta = 0 (null-space method).
inline Vector constrained_least_squares(const Matrix& X, const Vector& y, const Matrix& C,
                                        double rank_tol = 1e-10) {
  const Eigen::Index d = X.cols();
  Matrix B;
  if (C.size() == 0 || C.cols() == 0) {
    B = Matrix::Identity(d, d);
  } else {
    Eigen::BDCSVD<Matrix> svd(C, Eigen::ComputeFullU);
    const double smax = svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > rank_tol * smax) ++r;
    B = svd.matrixU().rightCols(d - r);
  }
  if (B.cols() == 0) return Vector::Zero(d);
  Vector z = (X * B).completeOrthogonalDecomposition().solve(y);
  return B * z;
}

// ---------------------------------------------------------------------------
// Standard sparse log-contrast fit (no mean shift): l1-penalized constrained
// regression, lambda picked by k-fold CV on test MSE.
// ---------------------------------------------------------------------------

struct SlcmOptions {
  int n_lambda = 20;
  double floor_ratio = 1e-3;
  int folds = 5;
  std::uint64_t seed = 0;
  SolverOptions solver;
};

struct SlcmFit {
  Vector beta;                  // fit scale
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_mse;   // mean test MSE per grid point
};

// Seeded fold assignment: uniform shuffle, then contiguous blocks.
inline std::vector<int> make_folds(int n, int k, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto eng = make_engine(seed);
  std::shuffle(order.begin(), order.end(), eng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  const int base = n / k, extra = n % k;
  int at = 0;
  for (int f = 0; f < k; ++f) {
    const int len = base + (f < extra ? 1 : 0);
    for (int j = 0; j < len; ++j) fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(at++)])] = f;
  }
  return fold_of;
}

namespace detail {

inline Matrix take_rows(const Matrix& X, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

inline Vector take(const Vector& v, const std::vector<int>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

}  // namespace detail

inline SlcmFit slcm_fit(const Matrix& X, const Vector& y, const ConstraintMatrix& cm,
                        const SlcmOptions& opts = {}) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  PenaltySpec spec;
  spec.kind = PenaltyKind::ElasticNet;
  spec.alpha = 1.0;
  spec.kappa = Vector::Ones(d);
  spec.weights = Vector::Ones(d);

  SlcmFit out;
  const auto full = detail::AlCore::build(X, cm, y, false, opts.solver);
  const double lmax = full.xty0.lpNorm<Eigen::Infinity>();
  if (!(lmax > 0.0)) {
    out.beta = Vector::Zero(d);
    return out;
  }
  out.grid.resize(static_cast<std::size_t>(opts.n_lambda));
  const double ratio = std::pow(opts.floor_ratio, 1.0 / (opts.n_lambda - 1));
  out.grid[0] = lmax;
  for (int i = 1; i < opts.n_lambda; ++i) out.grid[static_cast<std::size_t>(i)] = out.grid[static_cast<std::size_t>(i - 1)] * ratio;

  int k = std::min(opts.folds, n);
  if (k < 2) k = 2;
  const auto fold_of = make_folds(n, k, opts.seed);
  Matrix mse = Matrix::Zero(k, opts.n_lambda);
  for (int f = 0; f < k; ++f) {
    std::vector<int> tr, te;
    for (int i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    if (te.empty() || tr.size() < 2) continue;
    const Matrix Xtr = detail::take_rows(X, tr), Xte = detail::take_rows(X, te);
    const Vector ytr = detail::take(y, tr), yte = detail::take(y, te);
    const auto S = detail::AlCore::build(Xtr, cm, ytr, false, opts.solver);
    Vector theta = Vector::Zero(d);
    for (int i = 0; i < opts.n_lambda; ++i) {
      auto dd = detail::dual_descent_core(S, spec, out.grid[static_cast<std::size_t>(i)], theta, nullptr,
                                          opts.solver, false);
      theta = dd.theta;
      const Vector beta = S.proj * theta;
      mse(f, i) = (yte - Xte * beta).squaredNorm() / static_cast<double>(te.size());
    }
  }
  out.cv_mse.resize(static_cast<std::size_t>(opts.n_lambda));
  int best = 0;
  for (int i = 0; i < opts.n_lambda; ++i) {
    out.cv_mse[static_cast<std::size_t>(i)] = mse.col(i).mean();
    if (out.cv_mse[static_cast<std::size_t>(i)] < out.cv_mse[static_cast<std::size_t>(best)]) best = i;
  }

  Vector theta = Vector::Zero(d);
  for (int i = 0; i <= best; ++i) {
    auto dd = detail::dual_descent_core(full, spec, out.grid[static_cast<std::size_t>(i)], theta, nullptr,
                                        opts.solver, false);
    theta = dd.theta;
  }
  out.beta = full.proj * theta;
  out.lambda = out.grid[static_cast<std::size_t>(best)];
  return out;
}

// ---------------------------------------------------------------------------
// Two-stage refit
// ---------------------------------------------------------------------------

struct RefitResult {
  Vector beta_fit;       // refit coefficients on the fit scale (zeros off support)
  Vector beta_original;
  std::vector<int> support;
  std::vector<int> inliers;   // final inlier set
  std::vector<int> outliers;  // final outlier set (basis of FP2)
  double resid_sd = 0.0;
};

// Refit the plain (unpenalized) constrained model on the support of beta-hat
// using the samples the fit called inliers, then re-classify every sample by
// the 3-standard-deviation rule and refit once more on the final inlier set.
inline RefitResult refit_inliers(const RegressionProblem& prob, const FitResult& fit) {
  const int n = prob.n();
  const int d = prob.d();
  RefitResult r;
  for (int j = 0; j < d; ++j)
    if (fit.beta_fit[j] != 0.0) r.support.push_back(j);

  std::vector<int> stage1;
  for (int i = 0; i < n; ++i)
    if (fit.gamma[i] == 0.0) stage1.push_back(i);
  if (stage1.size() < r.support.size() + 1) {
    stage1.resize(static_cast<std::size_t>(n));
    std::iota(stage1.begin(), stage1.end(), 0);
  }

  Matrix Xs(n, static_cast<Eigen::Index>(r.support.size()));
  Matrix Cs(static_cast<Eigen::Index>(r.support.size()), prob.constraint.C.cols());
  for (std::size_t j = 0; j < r.support.size(); ++j) {
    Xs.col(static_cast<Eigen::Index>(j)) = prob.X.col(r.support[j]);
    Cs.row(static_cast<Eigen::Index>(j)) = prob.constraint.C.row(r.support[j]);
  }

  auto refit_on = [&](const std::vector<int>& rows) -> Vector {
    if (r.support.empty()) return Vector();
    return constrained_least_squares(detail::take_rows(Xs, rows), detail::take(prob.y, rows), Cs);
  };

  Vector bs = refit_on(stage1);
  Vector resid = r.support.empty() ? prob.y : Vector(prob.y - Xs * bs);
  r.resid_sd = sample_sd(detail::take(resid, stage1));

  for (int i = 0; i < n; ++i)
    (std::abs(resid[i]) > 3.0 * r.resid_sd ? r.outliers : r.inliers).push_back(i);
  if (r.inliers.size() < r.support.size() + 1) {
    r.inliers = stage1;  // degenerate re-classification, keep the stage-1 set
  }
  bs = refit_on(r.inliers);

  r.beta_fit = Vector::Zero(d);
  for (std::size_t j = 0; j < r.support.size(); ++j) r.beta_fit[r.support[j]] = bs[static_cast<Eigen::Index>(j)];
  r.beta_original = prob.col_scale.size() == d ? Vector(r.beta_fit.array() / prob.col_scale.array())
                                               : r.beta_fit;
  return r;
}

// Reporting objective, the (1/2n)-scaled form:
//   (1/2n)||y - X beta - gamma||^2 + P_lambda([beta; gamma/sqrt(n)]),
// with `gamma` in response units.
inline double objective(const RegressionProblem& prob, const Vector& beta_fit,
                        const Vector& gamma_resp, double lam) {
  const double n = static_cast<double>(prob.n());
  const Vector resid = prob.y - prob.X * beta_fit - gamma_resp;
  Vector delta(prob.d() + prob.n());
  delta.head(prob.d()) = beta_fit;
  delta.tail(prob.n()) = gamma_resp / std::sqrt(n);
  return resid.squaredNorm() / (2.0 * n) + penalty_value(prob.penalty, delta, lam);
}

// Objective the solver actually descends (see AlCore::objective_at).
inline double solver_objective(const RegressionProblem& prob, const Vector& beta_fit,
                               const Vector& gamma_resp, double lam) {
  const double n = static_cast<double>(prob.n());
  const Vector resid = prob.y - prob.X * beta_fit - gamma_resp;
  Vector delta(prob.d() + prob.n());
  delta.head(prob.d()) = beta_fit;
  delta.tail(prob.n()) = gamma_resp / std::sqrt(n);
  return 0.5 * resid.squaredNorm() + penalty_value(prob.penalty, delta, lam);
}

}  // namespace roblc

#pragma once

#include <array>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <vector>

#include "roblc/solver.hpp"

namespace roblc {

// Diagonal of the orthogonal projector onto col(Z). Entries in [0,1],
// sum equals rank(Z); rank decided at 1e-10 * sigma_max.
inline Vector leverage(const Matrix& Z, double rank_tol = 1e-10) {
  const Matrix U = orth_basis(Z, rank_tol);
  return U.array().square().rowwise().sum();
}

// R = H W^2 H with diag(W) = residual_i / (1 - h_ii). Samples with leverage
// h_ii >= 1 - 1e-8 carry no leave-one-out information and are dropped from
// the sensitivity computation (weight zero) with a warning.
inline Matrix sensitivity_matrix(const Vector& residuals, const Matrix& H) {
  if (H.rows() != H.cols() || residuals.size() != H.rows())
    throw std::invalid_argument("sensitivity_matrix: dimension mismatch");
  const Eigen::Index n = H.rows();
  Vector w(n);
  int dropped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (H(i, i) >= 1.0 - 1e-8) {
      w[i] = 0.0;
      ++dropped;
    } else {
      w[i] = residuals[i] / (1.0 - H(i, i));
    }
  }
  if (dropped > 0)
    std::cerr << "sensitivity_matrix: dropped " << dropped
              << " perfect-leverage sample(s) from the sensitivity computation\n";
  const Matrix WH = w.asDiagonal() * H;
  return WH.transpose() * WH;  // = H W^2 H, PSD by construction
}

// Eigenvectors of the (symmetric PSD) sensitivity matrix with eigenvalue
// above 1e-10 * lambda_max, in descending eigenvalue order, sign fixed so the
// largest-magnitude entry is positive. At most `max_components` are kept.
inline Matrix psc_components(const Matrix& R, int max_components = 25) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(R);
  const Vector& vals = eig.eigenvalues();  // ascending
  const double lmax = vals.size() > 0 ? vals[vals.size() - 1] : 0.0;
  if (!(lmax > 0.0)) return Matrix(R.rows(), 0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = vals.size() - 1; i >= 0; --i)
    if (vals[i] > 1e-10 * lmax) keep.push_back(i);
  const Eigen::Index q = std::min<Eigen::Index>(static_cast<Eigen::Index>(keep.size()),
                                                std::min<Eigen::Index>(R.rows(), max_components));
  Matrix U(R.rows(), q);
  for (Eigen::Index j = 0; j < q; ++j) {
    Vector u = eig.eigenvectors().col(keep[static_cast<std::size_t>(j)]);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < u.size(); ++i)
      if (std::abs(u[i]) > std::abs(u[arg])) arg = i;
    if (u[arg] < 0.0) u = -u;
    U.col(j) = u;
  }
  return U;
}

// The three candidate keep-sets of one sensitivity component: remove the m
// observations with the largest u_i, the smallest u_i, and the largest |u_i|.
// Ties are broken toward the lowest index.
inline std::array<std::vector<int>, 3> candidate_subsamples(const Vector& u, int m) {
  const int n = static_cast<int>(u.size());
  if (m < 0 || m > n) throw std::invalid_argument("candidate_subsamples: invalid m");
  auto keep_after_drop = [&](auto worse) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), worse);
    std::vector<int> keep(order.begin() + m, order.end());
    std::sort(keep.begin(), keep.end());
    return keep;
  };
  return {keep_after_drop([&](int a, int b) { return u[a] > u[b]; }),
          keep_after_drop([&](int a, int b) { return u[a] < u[b]; }),
          keep_after_drop([&](int a, int b) { return std::abs(u[a]) > std::abs(u[b]); })};
}

// Robust residual scale: 1.4826 * MAD.
inline double m_scale(const Vector& residuals, double factor = mad_normal_factor) {
  return mad(residuals, factor);
}

struct PscOptions {
  double tau = 0.25;        // candidate removal fraction, m = floor(|A| * tau)
  double alpha1 = 0.9;      // initial leverage-trim quantile
  double C1 = 2.0;          // clean-set cutoff multiple
  int max_outer = 20;
  double scale_tol = 1e-4;
  int max_components = 25;
  double nu = 1.0;
  double w_max = 1e6;
  std::uint64_t seed = 0;
  SlcmOptions slcm;
};

struct PscAnalysis {
  std::vector<int> clean_set;  // global sample indices with |y - X beta| < C1 * scale
  double scale = 0.0;          // winning full-sample m-scale
  Vector beta;                 // winning candidate coefficients
};

// One PSC pass: fit the sparse log-contrast model on the active set, build
// the sensitivity matrix on its support, evaluate the 3q+1 candidate
// subsamples by the m-scale of their full-sample residuals, and threshold a
// new clean set from the winner.
inline PscAnalysis psc_analysis(const Vector& y, const Matrix& X, const ConstraintMatrix& cm,
                                const std::vector<int>& active, const PscOptions& opts,
                                std::uint64_t stage_seed) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  const int n1 = static_cast<int>(active.size());
  if (n1 == 0) throw std::invalid_argument("psc_analysis: empty active set");

  const Matrix Xa = detail::take_rows(X, active);
  const Vector ya = detail::take(y, active);

  SlcmOptions sopt = opts.slcm;
  sopt.seed = split_seed(stage_seed, 0);
  Vector beta_bar = slcm_fit(Xa, ya, cm, sopt).beta;

  std::vector<int> support;
  for (int j = 0; j < d; ++j)
    if (beta_bar[j] != 0.0) support.push_back(j);
  if (support.empty()) {
    // all-zero sparse fit: fall back to the unpenalized constrained fit
    beta_bar = constrained_least_squares(Xa, ya, cm.C);
    support.resize(static_cast<std::size_t>(d));
    std::iota(support.begin(), support.end(), 0);
  }
  const Vector resid_a = ya - Xa * beta_bar;

  Matrix Xab(n1, static_cast<Eigen::Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j) Xab.col(static_cast<Eigen::Index>(j)) = Xa.col(support[j]);
  const Matrix Ub = orth_basis(Xab);
  const Matrix H = Ub * Ub.transpose();
  const Matrix R = sensitivity_matrix(resid_a, H);
  const Matrix U = psc_components(R, std::min(opts.max_components, n1));

  PscAnalysis best;
  best.beta = beta_bar;
  best.scale = m_scale(y - X * beta_bar);

  const int m = static_cast<int>(std::floor(n1 * opts.tau));
  if (m > 0) {
    std::uint64_t counter = 1;
    for (Eigen::Index c = 0; c < U.cols(); ++c) {
      const auto sets = candidate_subsamples(U.col(c), m);
      for (const auto& local : sets) {
        std::vector<int> cand;
        cand.reserve(local.size());
        for (int i : local) cand.push_back(active[static_cast<std::size_t>(i)]);
        SlcmOptions copt = opts.slcm;
        copt.seed = split_seed(stage_seed, counter++);
        const Vector beta_c = slcm_fit(detail::take_rows(X, cand), detail::take(y, cand), cm, copt).beta;
        const double s_c = m_scale(y - X * beta_c);
        if (s_c < best.scale) {
          best.scale = s_c;
          best.beta = beta_c;
        }
      }
    }
  }

  const Vector resid_full = y - X * best.beta;
  for (int i = 0; i < n; ++i)
    if (std::abs(resid_full[i]) < opts.C1 * best.scale) best.clean_set.push_back(i);
  if (best.clean_set.empty()) best.clean_set = active;  // degenerate scale, keep going
  return best;
}

struct RobustInit {
  Vector beta;         // fit-scale coefficients from the final clean set
  Vector gamma;        // full-sample residuals y - X beta (response units)
  Vector delta_start;  // stacked [beta; gamma/sqrt(n)], the solver-scale start
  Vector weights;      // adaptive weights |delta_start|^-nu, capped
  double scale = 0.0;  // m-scale of the final residuals
  std::vector<int> clean_set;
  int iterations = 0;
};

// Leverage-trimmed PSC refinement until the scale stabilizes, then the final
// sparse fit on the clean set. Output feeds the hard-ridge restart vector and
// the adaptive elastic-net weights.
inline RobustInit robust_init(const Vector& y, const Matrix& X, const ConstraintMatrix& cm,
                              const PscOptions& opts = {}) {
  const int n = static_cast<int>(X.rows());
  const Vector h = leverage(X);
  std::vector<double> hs(h.data(), h.data() + h.size());
  std::sort(hs.begin(), hs.end());
  const int rank1 = std::clamp(static_cast<int>(std::ceil(opts.alpha1 * n)), 1, n);
  const double hcut = hs[static_cast<std::size_t>(rank1 - 1)];
  std::vector<int> active;
  for (int i = 0; i < n; ++i)
    if (h[i] <= hcut) active.push_back(i);

  RobustInit out;
  double s_prev = 1e8;
  PscAnalysis pa;
  for (int it = 1; it <= opts.max_outer; ++it) {
    pa = psc_analysis(y, X, cm, active, opts, split_seed(opts.seed, static_cast<std::uint64_t>(it)));
    active = pa.clean_set;
    out.iterations = it;
    if (std::abs(pa.scale - s_prev) <= opts.scale_tol) break;
    s_prev = pa.scale;
  }
  out.clean_set = active;

  SlcmOptions sopt = opts.slcm;
  sopt.seed = split_seed(opts.seed, 0xfffful);
  out.beta = slcm_fit(detail::take_rows(X, active), detail::take(y, active), cm, sopt).beta;
  out.gamma = y - X * out.beta;
  out.scale = m_scale(out.gamma);

  out.delta_start.resize(X.cols() + n);
  out.delta_start.head(X.cols()) = out.beta;
  out.delta_start.tail(n) = out.gamma / std::sqrt(static_cast<double>(n));
  out.weights = adaptive_weights(out.delta_start, opts.nu, opts.w_max);
  return out;
}

}  // namespace roblc

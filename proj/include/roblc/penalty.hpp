#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "roblc/stats.hpp"

namespace roblc {

enum class PenaltyKind { HardRidge, ElasticNet, AdaptiveElasticNet };

inline char penalty_code(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::HardRidge: return 'H';
    case PenaltyKind::ElasticNet: return 'E';
    case PenaltyKind::AdaptiveElasticNet: return 'A';
  }
  return '?';
}

inline PenaltyKind penalty_from_code(char c) {
  switch (c) {
    case 'H': case 'h': return PenaltyKind::HardRidge;
    case 'E': case 'e': return PenaltyKind::ElasticNet;
    case 'A': case 'a': return PenaltyKind::AdaptiveElasticNet;
  }
  throw std::invalid_argument("unknown penalty code, expected one of H, E, A");
}

// Per-block multipliers that turn the single tuning parameter lambda into
// lambda_1 = k1*lambda on the mean-shift block and lambda_2 = k2*lambda on
// the coefficient block: k1 = sqrt(log(e*n)), k2 = sqrt(log(e*p_eff)).
inline std::pair<double, double> kappa_scalars(int n, int p_eff) {
  if (n < 1 || p_eff < 1) throw std::invalid_argument("kappa_scalars: counts must be >= 1");
  return {std::sqrt(1.0 + std::log(static_cast<double>(n))),
          std::sqrt(1.0 + std::log(static_cast<double>(p_eff)))};
}

inline double soft_threshold(double a, double lam) {
  const double m = std::abs(a) - lam;
  return m > 0.0 ? (a > 0.0 ? m : -m) : 0.0;
}

inline double hard_threshold(double a, double lam) {
  return std::abs(a) > lam ? a : 0.0;
}

// Scalar proximity operators of the three penalties, in the single-lambda
// parameterization.  `scale` generalizes them to the prox of P_lambda/scale,
// the backward step of an ISTA iteration with step size 1/scale; scale = 1
// recovers the plain operators.
//
// Hard-ridge note: at |input| == cut exactly, the nonzero branch is returned
// (a measure-zero tie, resolved toward keeping the coordinate).
inline double prox_scaled(PenaltyKind kind, double t, double lam, double alpha, double kappa,
                          double weight, double scale) {
  const double rho = lam * (1.0 - alpha) / scale;
  switch (kind) {
    case PenaltyKind::HardRidge: {
      const double u = t / (1.0 + rho);
      const double cut = (alpha * lam * kappa / std::sqrt(scale)) / std::sqrt(1.0 + rho);
      return std::abs(u) >= cut ? u : 0.0;
    }
    case PenaltyKind::ElasticNet:
      return soft_threshold(t, alpha * lam * kappa / scale) / (1.0 + rho);
    case PenaltyKind::AdaptiveElasticNet:
      return soft_threshold(t, weight * alpha * lam * kappa / scale) / (1.0 + rho);
  }
  return t;
}

inline double prox(PenaltyKind kind, double t, double lam, double alpha, double kappa,
                   double weight = 1.0) {
  return prox_scaled(kind, t, lam, alpha, kappa, weight, 1.0);
}

// Penalty value P_lambda(delta). The hard-ridge l0 level uses the alpha^2
// convention of the scalar operator table, which is the one its prox formula
// is consistent with.
inline double penalty_value(PenaltyKind kind, const Vector& delta, double lam, double alpha,
                            const Vector& kappa, const Vector& weights) {
  if (delta.size() != kappa.size())
    throw std::invalid_argument("penalty_value: kappa length mismatch");
  const double ridge = 0.5 * (1.0 - alpha) * lam * delta.squaredNorm();
  double sparse = 0.0;
  switch (kind) {
    case PenaltyKind::HardRidge:
      for (Eigen::Index i = 0; i < delta.size(); ++i)
        if (delta[i] != 0.0) sparse += 0.5 * alpha * alpha * lam * lam * kappa[i] * kappa[i];
      break;
    case PenaltyKind::ElasticNet:
      sparse = alpha * lam * (kappa.array() * delta.array().abs()).sum();
      break;
    case PenaltyKind::AdaptiveElasticNet:
      if (weights.size() != delta.size())
        throw std::invalid_argument("penalty_value: weights length mismatch");
      sparse = alpha * lam * (kappa.array() * weights.array() * delta.array().abs()).sum();
      break;
  }
  return sparse + ridge;
}

// Penalty configuration over the stacked variable [beta (p+m); gamma (n)].
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::ElasticNet;
  double alpha = 0.95;
  Vector kappa;    // per-coordinate multiplier, [k2 on beta block; k1 on gamma block]
  Vector weights;  // nonnegative, all-ones unless adaptive

  Eigen::Index dim() const { return kappa.size(); }
};

// kappa = [k2 * 1_d ; k1 * 1_n], unit weights.
inline PenaltySpec make_penalty_spec(PenaltyKind kind, int n, int d, double alpha = 0.95) {
  auto [k1, k2] = kappa_scalars(n, d);
  PenaltySpec s;
  s.kind = kind;
  s.alpha = alpha;
  s.kappa.resize(d + n);
  s.kappa.head(d).setConstant(k2);
  s.kappa.tail(n).setConstant(k1);
  s.weights = Vector::Ones(d + n);
  return s;
}

// w = |delta_init|^-nu, capped at w_max so coordinates flagged as zero by the
// initializer stay finite (and effectively excluded).
inline Vector adaptive_weights(const Vector& delta_init, double nu = 1.0, double w_max = 1e6) {
  Vector w(delta_init.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double a = std::abs(delta_init[i]);
    w[i] = a > 0.0 ? std::min(std::pow(a, -nu), w_max) : w_max;
  }
  return w;
}

inline Vector apply_prox_scaled(const PenaltySpec& spec, const Vector& t, double lam, double scale) {
  Vector out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i)
    out[i] = prox_scaled(spec.kind, t[i], lam, spec.alpha, spec.kappa[i], spec.weights[i], scale);
  return out;
}

inline Vector apply_prox(const PenaltySpec& spec, const Vector& t, double lam) {
  return apply_prox_scaled(spec, t, lam, 1.0);
}

inline double penalty_value(const PenaltySpec& spec, const Vector& delta, double lam) {
  return penalty_value(spec.kind, delta, lam, spec.alpha, spec.kappa, spec.weights);
}

}  // namespace roblc

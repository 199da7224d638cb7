#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace roblc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// MAD consistency factor for the normal model (1/qnorm(0.75)).
inline constexpr double mad_normal_factor = 1.4826;

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty input");
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double med = v[mid];
  if (n % 2 == 0) {
    med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return med;
}

inline double median(const Vector& v) {
  return median(std::vector<double>(v.data(), v.data() + v.size()));
}

// Median absolute deviation about the median, scaled by `factor`.
inline double mad(const Vector& v, double factor = mad_normal_factor) {
  const double med = median(v);
  std::vector<double> dev(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) dev[static_cast<std::size_t>(i)] = std::abs(v[i] - med);
  return factor * median(std::move(dev));
}

inline double mean(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("mean: empty input");
  return v.mean();
}

// Sample standard deviation (n-1 denominator).
inline double sample_sd(const Vector& v) {
  const Eigen::Index n = v.size();
  if (n < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(n - 1));
}

// Root mean square about zero.
inline double rms(const Vector& v) {
  if (v.size() == 0) return 0.0;
  return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// SD of a standard normal truncated to [-k, k]. Dividing the post-trim SD by
// this makes the trimmed scale estimate consistent at the normal model, the
// same convention as the 1.4826 factor in the MAD.
inline double truncated_normal_sd(double k) {
  const double denom = 2.0 * normal_cdf(k) - 1.0;
  if (denom <= 0.0) return 1.0;
  return std::sqrt(1.0 - 2.0 * k * normal_pdf(k) / denom);
}

}  // namespace roblc

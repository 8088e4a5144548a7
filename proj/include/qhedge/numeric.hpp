#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

namespace qhedge {

/// Neumaier (improved Kahan) running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double accurate_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Mean with a standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Sample mean and standard error of a sequence of per-path contributions.
inline Estimate mean_estimate(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) return {};
  CompensatedSum s;
  for (double x : xs) s.add(x);
  const double mean = s.value() / double(n);
  if (n < 2) return {mean, 0.0};
  CompensatedSum ss;
  for (double x : xs) ss.add((x - mean) * (x - mean));
  return {mean, std::sqrt(ss.value() / double(n - 1) / double(n))};
}

}  // namespace qhedge

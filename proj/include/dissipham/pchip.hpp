#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dissipham::detail {

/// Shape-preserving piecewise-cubic interpolant (Fritsch-Carlson slopes).
///
/// Monotone data produces a monotone curve with no overshoot, which is what
/// force tables sampled up to a turning point need: the data flattens into a
/// square-root profile there and an unconstrained cubic would oscillate.
/// Exact antiderivatives of the cubic pieces are precomputed so definite
/// integrals cost one lookup.
class PchipCurve {
 public:
  PchipCurve() = default;

  PchipCurve(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    const size_t n = x_.size();
    if (n < 2 || y_.size() != n) {
      throw std::invalid_argument("pchip needs at least two samples");
    }
    for (size_t i = 1; i < n; ++i) {
      if (!(x_[i] > x_[i - 1])) {
        throw std::invalid_argument("pchip abscissae must be strictly increasing");
      }
    }
    d_.resize(n);
    compute_slopes();
    build_prefix_integrals();
  }

  int size() const { return static_cast<int>(x_.size()); }
  double min_x() const { return x_.front(); }
  double max_x() const { return x_.back(); }
  const std::vector<double>& abscissae() const { return x_; }
  const std::vector<double>& values() const { return y_; }

  double value(double x) const {
    const size_t j = interval(x);
    const double h = x_[j + 1] - x_[j];
    const double s = (x - x_[j]) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y_[j] + (s3 - 2 * s2 + s) * h * d_[j] +
           (-2 * s3 + 3 * s2) * y_[j + 1] + (s3 - s2) * h * d_[j + 1];
  }

  double slope(double x) const {
    const size_t j = interval(x);
    const double h = x_[j + 1] - x_[j];
    const double s = (x - x_[j]) / h;
    const double s2 = s * s;
    return (6 * s2 - 6 * s) / h * y_[j] + (3 * s2 - 4 * s + 1) * d_[j] +
           (-6 * s2 + 6 * s) / h * y_[j + 1] + (3 * s2 - 2 * s) * d_[j + 1];
  }

  /// Integral of the curve from min_x() to x (exact per cubic piece).
  double integral_from_min(double x) const {
    const size_t j = interval(x);
    const double h = x_[j + 1] - x_[j];
    const double s = (x - x_[j]) / h;
    const double s2 = s * s, s3 = s2 * s, s4 = s2 * s2;
    const double i00 = 0.5 * s4 - s3 + s;
    const double i10 = 0.25 * s4 - (2.0 / 3.0) * s3 + 0.5 * s2;
    const double i01 = -0.5 * s4 + s3;
    const double i11 = 0.25 * s4 - s3 / 3.0;
    return prefix_[j] +
           h * (i00 * y_[j] + i10 * h * d_[j] + i01 * y_[j + 1] + i11 * h * d_[j + 1]);
  }

 private:
  size_t interval(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    auto j = static_cast<size_t>(std::distance(x_.begin(), it));
    if (j > 0) --j;
    return std::min(j, x_.size() - 2);
  }

  static double edge_slope(double h0, double h1, double del0, double del1) {
    double d = ((2 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if (d * del0 <= 0.0) {
      d = 0.0;
    } else if (del0 * del1 < 0.0 && std::abs(d) > 3.0 * std::abs(del0)) {
      d = 3.0 * del0;
    }
    return d;
  }

  void compute_slopes() {
    const size_t n = x_.size();
    if (n == 2) {
      const double del = (y_[1] - y_[0]) / (x_[1] - x_[0]);
      d_[0] = d_[1] = del;
      return;
    }
    std::vector<double> h(n - 1), del(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      del[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    for (size_t i = 1; i + 1 < n; ++i) {
      if (del[i - 1] * del[i] > 0.0) {
        const double w1 = 2 * h[i] + h[i - 1];
        const double w2 = h[i] + 2 * h[i - 1];
        d_[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
      } else {
        d_[i] = 0.0;
      }
    }
    d_[0] = edge_slope(h[0], h[1], del[0], del[1]);
    d_[n - 1] = edge_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
  }

  void build_prefix_integrals() {
    const size_t n = x_.size();
    prefix_.assign(n - 1, 0.0);
    double acc = 0.0;
    for (size_t j = 0; j + 1 < n; ++j) {
      prefix_[j] = acc;
      const double h = x_[j + 1] - x_[j];
      acc += h * (0.5 * (y_[j] + y_[j + 1]) + h * (d_[j] - d_[j + 1]) / 12.0);
    }
  }

  std::vector<double> x_, y_, d_, prefix_;
};

}  // namespace dissipham::detail

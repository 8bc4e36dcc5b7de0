#pragma once

// Closed forms used as independent oracles. These stay deliberately
// separate from the library: they are evaluated from the textbook
// solution, not from any integrator or interpolant under test.

#include <cmath>

namespace oracles {

/// Underdamped scalar oscillator qdd + c qd + k q = 0, q(0)=q0, qd(0)=v0,
/// valid for c^2 < 4k.
struct DampedOscillator {
  double c = 0.2;
  double k = 1.0;
  double q0 = 1.0;
  double v0 = 0.0;

  double delta() const { return 0.5 * c; }
  double omega_d() const { return std::sqrt(k - delta() * delta()); }

  double q(double t) const {
    const double d = delta(), w = omega_d();
    return std::exp(-d * t) * (q0 * std::cos(w * t) + (v0 + d * q0) / w * std::sin(w * t));
  }

  double p(double t) const {
    const double d = delta(), w = omega_d();
    return std::exp(-d * t) * (v0 * std::cos(w * t) - (k * q0 + d * v0) / w * std::sin(w * t));
  }

  double energy(double t) const {
    const double qq = q(t), pp = p(t);
    return 0.5 * pp * pp + 0.5 * k * qq * qq;
  }

  /// m-th turning time (qd = 0): for v0 = 0 these are m*pi/omega_d.
  double turning_time(int m) const { return m * M_PI / omega_d(); }

  /// Invert q on a monotone window [t_lo, t_hi] by bisection.
  double time_of_q(double target, double t_lo, double t_hi) const {
    double lo = t_lo, hi = t_hi;
    const bool increasing = q(t_hi) > q(t_lo);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const bool below = q(mid) < target;
      if (below == increasing) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }
};

}  // namespace oracles

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dissipham/model.hpp"
#include "dissipham/trajectory.hpp"

namespace dissipham {

/// Raised when the adaptive integrator cannot make progress; carries the
/// time of the last accepted step.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& msg, double last_good_time)
      : std::runtime_error(msg + " (last good time " + std::to_string(last_good_time) + ")"),
        brief_(msg),
        last_good_time_(last_good_time) {}

  /// Message without the appended time, for rethrowing with more context.
  const std::string& brief() const { return brief_; }
  double last_good_time() const { return last_good_time_; }

 private:
  std::string brief_;
  double last_good_time_;
};

struct IntegratorOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Maximum step; 0 selects a default from the system's shortest period.
  /// The cap keeps the cubic-Hermite dense output far more accurate than
  /// the residual tolerances asserted downstream.
  double max_step = 0.0;
};

namespace detail {

// Dormand-Prince 5(4) tableau (FSAL).
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - bhat, for the embedded 4th-order error estimate.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace detail

/// Adaptive Dormand-Prince 5(4) integration of y' = rhs(t, y) over
/// [t0, t1]. Every accepted node (state + derivative) is appended to the
/// returned Trajectory, so dense output is available on the whole span.
template <typename Rhs>
Trajectory integrate_adaptive(Rhs&& rhs, const Vec& y0, double t0, double t1,
                              const IntegratorOptions& opt,
                              const InitialCondition& meta) {
  using T = detail::Dopri5;
  if (t1 <= t0) throw ConfigurationError("integration horizon must be positive");
  if (opt.rtol <= 0 || opt.atol <= 0) throw ConfigurationError("tolerances must be positive");

  const double span = t1 - t0;
  const double hmax = opt.max_step > 0 ? opt.max_step : span;
  const double hmin = std::max(1e-14 * span, 8.0 * std::numeric_limits<double>::epsilon() *
                                                 std::max(std::abs(t0), std::abs(t1)));

  Trajectory traj(meta, opt.rtol, opt.atol);

  double t = t0;
  Vec y = y0;
  Vec k1 = rhs(t, y);
  traj.append(t, y, k1);

  double h = std::min(hmax, span / 100.0);
  Vec k2, k3, k4, k5, k6, k7, ynew, yerr;

  while (t < t1) {
    if (h < hmin) {
      throw IntegrationError("step size underflow", t);
    }
    // Clip the final step so the last node lands exactly on t1; only a
    // controller-driven h below hmin counts as underflow.
    const bool last = t + h >= t1;
    const double hs = last ? t1 - t : h;

    k2 = rhs(t + T::c2 * hs, Vec(y + hs * (T::a21 * k1)));
    k3 = rhs(t + T::c3 * hs, Vec(y + hs * (T::a31 * k1 + T::a32 * k2)));
    k4 = rhs(t + T::c4 * hs, Vec(y + hs * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3)));
    k5 = rhs(t + T::c5 * hs,
             Vec(y + hs * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4)));
    k6 = rhs(t + hs, Vec(y + hs * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 +
                                   T::a65 * k5)));
    ynew = y + hs * (T::b1 * k1 + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 + T::b6 * k6);
    k7 = rhs(t + hs, ynew);
    yerr = hs * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);

    // RMS norm of the error scaled by atol + rtol*max(|y|, |ynew|).
    double err = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
      const double r = yerr(i) / sc;
      err += r * r;
    }
    err = std::sqrt(err / static_cast<double>(y.size()));

    if (std::isfinite(err) && err <= 1.0) {
      t = last ? t1 : t + hs;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      traj.append(t, y, k1);
    }

    // A non-finite error estimate (state overflowed) is a hard rejection.
    double factor = 0.2;
    if (std::isfinite(err)) factor = err > 0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h = hs * std::clamp(factor, 0.2, 5.0);
    h = std::min(h, hmax);
  }
  return traj;
}

inline double default_max_step(const DampedSystem& sys, double t_end) {
  const double period = sys.min_period();
  const double cap = std::isfinite(period) ? period / 2000.0 : t_end / 200.0;
  return std::min(cap, t_end / 50.0);
}

/// Integrate the damped flow from initial condition a over [0, t_end].
inline Trajectory integrate_damped(const DampedSystem& sys, const InitialCondition& a,
                                   double t_end, const IntegratorOptions& opt = {}) {
  if (a.dof() != sys.dof()) {
    throw ConfigurationError("initial condition dimension does not match system");
  }
  IntegratorOptions o = opt;
  if (o.max_step <= 0) o.max_step = default_max_step(sys, t_end);
  const Mat flow = sys.flow_matrix();
  auto rhs = [&flow](double, const Vec& y) -> Vec { return flow * y; };
  return integrate_adaptive(rhs, a.a, 0.0, t_end, o, a);
}

inline Trajectory integrate_damped(const DampedSystem& sys, const InitialCondition& a,
                                   double t_end, double rtol, double atol) {
  return integrate_damped(sys, a, t_end, IntegratorOptions{rtol, atol, 0.0});
}

/// Fixed-step velocity-Verlet scan of qdd = force(q)/m with m = 1.
///
/// `force` maps an n-vector q to the n-vector of forces; the observer is
/// called as observe(t, q, p, f) after every node (including the initial
/// one). A final shortened step lands exactly on t_end when the horizon is
/// not a whole number of steps. For separable per-coordinate forces the
/// scheme is symplectic; one step is the composition of three
/// unit-determinant shears.
template <typename Force, typename Observer>
void verlet_scan(Force&& force, Vec q, Vec p, double t0, double t_end, double h,
                 Observer&& observe) {
  if (h <= 0) throw ConfigurationError("verlet step must be positive");
  if (t_end <= t0) throw ConfigurationError("integration horizon must be positive");

  const long steps = static_cast<long>(std::floor((t_end - t0) / h + 1e-9));
  const double remainder = (t_end - t0) - static_cast<double>(steps) * h;

  Vec f = force(q);
  observe(t0, q, p, f);
  for (long s = 1; s <= steps; ++s) {
    Vec ph = p + (0.5 * h) * f;
    q += h * ph;
    f = force(q);
    p = ph + (0.5 * h) * f;
    observe(t0 + static_cast<double>(s) * h, q, p, f);
  }
  if (remainder > 1e-12 * std::max(1.0, std::abs(t_end))) {
    Vec ph = p + (0.5 * remainder) * f;
    q += remainder * ph;
    f = force(q);
    p = ph + (0.5 * remainder) * f;
    observe(t_end, q, p, f);
  }
}

/// Verlet run stored as a Trajectory (nodes carry (p, f) as derivative).
template <typename Force>
Trajectory integrate_verlet(Force&& force, const Vec& q0, const Vec& p0, double t0,
                            double t_end, double h, const InitialCondition& meta) {
  const auto n = q0.size();
  Trajectory traj(meta, 0.0, 0.0);
  verlet_scan(std::forward<Force>(force), q0, p0, t0, t_end, h,
              [&](double t, const Vec& q, const Vec& p, const Vec& f) {
                Vec y(2 * n), dy(2 * n);
                y.head(n) = q;
                y.tail(n) = p;
                dy.head(n) = p;
                dy.tail(n) = f;
                traj.append(t, std::move(y), std::move(dy));
              });
  return traj;
}

inline Trajectory integrate_conservative_linear(const Mat& stiffness,
                                                const InitialCondition& a, double t_end,
                                                double h) {
  auto force = [&stiffness](const Vec& q) -> Vec { return -stiffness * q; };
  return integrate_verlet(force, a.q0(), a.v0(), 0.0, t_end, h, a);
}

/// Jacobian of the flow map with respect to the initial condition,
/// sampled at the integrator's accepted times. det(J) measures how the
/// flow distorts phase-space volume.
struct VariationalFlow {
  std::vector<double> times;
  std::vector<Mat> jacobians;  ///< 2n x 2n, J(t0) = I

  double determinant(int j) const { return jacobians[static_cast<size_t>(j)].determinant(); }
  int size() const { return static_cast<int>(times.size()); }
};

/// Integrate state and tangent map together for the damped flow. For the
/// linear system the variational equation is J' = A J with the constant
/// flow matrix A, so det J(t) = exp(-tr(C) t) exactly in exact arithmetic.
inline VariationalFlow integrate_variational(const DampedSystem& sys,
                                             const InitialCondition& a, double t_end,
                                             const IntegratorOptions& opt = {}) {
  if (a.dof() != sys.dof()) {
    throw ConfigurationError("initial condition dimension does not match system");
  }
  IntegratorOptions o = opt;
  if (o.max_step <= 0) o.max_step = default_max_step(sys, t_end);

  const int m = 2 * sys.dof();
  const Mat flow = sys.flow_matrix();

  // Augmented vector: state (m) followed by J stored column-major (m*m).
  Vec z0(m + m * m);
  z0.head(m) = a.a;
  Eigen::Map<Mat>(z0.data() + m, m, m) = Mat::Identity(m, m);

  auto rhs = [&flow, m](double, const Vec& z) -> Vec {
    Vec dz(z.size());
    dz.head(m) = flow * z.head(m);
    Eigen::Map<const Mat> j(z.data() + m, m, m);
    Eigen::Map<Mat>(dz.data() + m, m, m) = flow * j;
    return dz;
  };

  Trajectory aug = integrate_adaptive(rhs, z0, 0.0, t_end, o, a);

  VariationalFlow out;
  out.times.reserve(static_cast<size_t>(aug.size()));
  out.jacobians.reserve(static_cast<size_t>(aug.size()));
  for (int j = 0; j < aug.size(); ++j) {
    out.times.push_back(aug.node_time(j));
    out.jacobians.emplace_back(Eigen::Map<const Mat>(aug.node_state(j).data() + m, m, m));
  }
  return out;
}

/// Velocity-Verlet with the exact tangent map of each step propagated
/// alongside. `force_jacobian` returns d(force)/dq at q (n x n). Each step's
/// tangent map is a product of three shears, so its determinant is 1 up to
/// roundoff whenever force_jacobian is exact.
template <typename Force, typename ForceJacobian>
VariationalFlow integrate_verlet_variational(Force&& force, ForceJacobian&& force_jacobian,
                                             const Vec& q0, const Vec& p0, double t0,
                                             double t_end, double h) {
  if (h <= 0) throw ConfigurationError("verlet step must be positive");
  const auto n = q0.size();
  const long steps = static_cast<long>(std::floor((t_end - t0) / h + 1e-9));
  const double remainder = (t_end - t0) - static_cast<double>(steps) * h;

  VariationalFlow out;
  Vec q = q0, p = p0;
  Mat jac = Mat::Identity(2 * n, 2 * n);
  out.times.push_back(t0);
  out.jacobians.push_back(jac);

  Vec f = force(q);
  Mat fq = force_jacobian(q);
  auto step = [&](double hs, double t_node) {
    // Tangent of: ph = p + h/2 f(q);  q' = q + h ph;  p' = ph + h/2 f(q').
    jac.bottomRows(n) += (0.5 * hs) * (fq * jac.topRows(n));
    jac.topRows(n) += hs * jac.bottomRows(n);

    Vec ph = p + (0.5 * hs) * f;
    q += hs * ph;
    f = force(q);
    fq = force_jacobian(q);
    p = ph + (0.5 * hs) * f;

    jac.bottomRows(n) += (0.5 * hs) * (fq * jac.topRows(n));
    out.times.push_back(t_node);
    out.jacobians.push_back(jac);
  };
  for (long s = 1; s <= steps; ++s) step(h, t0 + static_cast<double>(s) * h);
  if (remainder > 1e-12 * std::max(1.0, std::abs(t_end))) step(remainder, t_end);
  return out;
}

/// Tangent map of a single Verlet step from q_before to q_after;
/// determinant 1 up to machine precision for any separable force.
template <typename ForceJacobian>
Mat verlet_step_tangent(ForceJacobian&& force_jacobian, const Vec& q_before, double h,
                        const Vec& q_after) {
  const auto n = q_before.size();
  Mat jac = Mat::Identity(2 * n, 2 * n);
  jac.bottomRows(n) += (0.5 * h) * (force_jacobian(q_before) * jac.topRows(n));
  jac.topRows(n) += h * jac.bottomRows(n);
  jac.bottomRows(n) += (0.5 * h) * (force_jacobian(q_after) * jac.topRows(n));
  return jac;
}

}  // namespace dissipham

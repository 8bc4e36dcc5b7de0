#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace dissipham {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when a system definition or call violates a structural
/// precondition (dimension mismatch, non-finite entries, ...).
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline bool all_finite(const Mat& m) {
  return m.allFinite();
}

}  // namespace detail

/// Point in phase space at a given time. Momenta equal velocities
/// (unit masses throughout).
struct PhaseState {
  Vec q;
  Vec p;
  double t = 0.0;

  int dof() const { return static_cast<int>(q.size()); }

  /// Pack as (q, p) into a flat 2n-vector.
  Vec flat() const {
    Vec y(2 * q.size());
    y.head(q.size()) = q;
    y.tail(p.size()) = p;
    return y;
  }

  static PhaseState from_flat(const Vec& y, double t) {
    const auto n = y.size() / 2;
    return PhaseState{y.head(n), y.tail(n), t};
  }
};

/// Initial condition a = (q0, qdot0) labelling a phase curve.
struct InitialCondition {
  Vec a;

  InitialCondition() = default;
  explicit InitialCondition(Vec values) : a(std::move(values)) {
    if (a.size() % 2 != 0) {
      throw ConfigurationError("initial condition must have even length (q0, qdot0)");
    }
    if (!a.allFinite()) {
      throw ConfigurationError("initial condition has non-finite entries");
    }
  }
  InitialCondition(const Vec& q0, const Vec& v0) {
    if (q0.size() != v0.size()) {
      throw ConfigurationError("initial condition: q0 and qdot0 lengths differ");
    }
    a.resize(2 * q0.size());
    a.head(q0.size()) = q0;
    a.tail(v0.size()) = v0;
    if (!a.allFinite()) {
      throw ConfigurationError("initial condition has non-finite entries");
    }
  }

  int dof() const { return static_cast<int>(a.size()) / 2; }
  Vec q0() const { return a.head(dof()); }
  Vec v0() const { return a.tail(dof()); }

  PhaseState state() const { return PhaseState{q0(), v0(), 0.0}; }
};

/// Linear mechanical system  qdd + C qd + K q = 0  with unit masses.
///
/// C is the damping coefficient matrix (1/time), K the stiffness matrix
/// (1/time^2). With `physical = true` the constructor additionally requires
/// K to be symmetric positive semi-definite; pathological test systems can
/// skip that check.
class DampedSystem {
 public:
  DampedSystem(Mat damping, Mat stiffness, bool physical = false)
      : damping_(std::move(damping)), stiffness_(std::move(stiffness)) {
    const auto n = damping_.rows();
    if (n == 0 || damping_.cols() != n) {
      throw ConfigurationError("damping matrix must be square and non-empty");
    }
    if (stiffness_.rows() != n || stiffness_.cols() != n) {
      throw ConfigurationError("stiffness matrix must match damping dimensions");
    }
    if (!detail::all_finite(damping_) || !detail::all_finite(stiffness_)) {
      throw ConfigurationError("system matrices must be finite");
    }
    if (physical) {
      const double scale = std::max(1.0, stiffness_.cwiseAbs().maxCoeff());
      if (!stiffness_.isApprox(stiffness_.transpose(), 1e-12)) {
        throw ConfigurationError("physical system requires symmetric stiffness");
      }
      Eigen::SelfAdjointEigenSolver<Mat> es(stiffness_);
      if (es.eigenvalues().minCoeff() < -1e-12 * scale) {
        throw ConfigurationError("physical system requires positive semi-definite stiffness");
      }
    }
  }

  int dof() const { return static_cast<int>(damping_.rows()); }
  const Mat& damping() const { return damping_; }
  const Mat& stiffness() const { return stiffness_; }

  bool undamped() const { return damping_.isZero(0.0); }

  /// Shortest natural period 2*pi/sqrt(lambda_max(K_sym)); +inf when the
  /// symmetric part of K has no positive eigenvalue (free motion).
  double min_period() const {
    Mat sym = 0.5 * (stiffness_ + stiffness_.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    const double lmax = es.eigenvalues().maxCoeff();
    if (lmax <= 0.0) return std::numeric_limits<double>::infinity();
    return 2.0 * M_PI / std::sqrt(lmax);
  }

  /// Flow matrix of the first-order form: y' = A y with y = (q, p).
  Mat flow_matrix() const {
    const int n = dof();
    Mat a = Mat::Zero(2 * n, 2 * n);
    a.topRightCorner(n, n) = Mat::Identity(n, n);
    a.bottomLeftCorner(n, n) = -stiffness_;
    a.bottomRightCorner(n, n) = -damping_;
    return a;
  }

 private:
  Mat damping_;
  Mat stiffness_;
};

inline void check_dimensions(const DampedSystem& sys, const PhaseState& s) {
  if (s.q.size() != sys.dof() || s.p.size() != sys.dof()) {
    throw ConfigurationError("phase state dimension does not match system");
  }
}

/// Right-hand side of the first-order form: (qd, pd) = (p, -K q - C p).
inline Vec damped_rhs(const DampedSystem& sys, const PhaseState& s) {
  check_dimensions(sys, s);
  const int n = sys.dof();
  Vec dy(2 * n);
  dy.head(n) = s.p;
  dy.tail(n) = -sys.stiffness() * s.q - sys.damping() * s.p;
  return dy;
}

/// Total mechanical energy H = p^T p / 2 + q^T K q / 2 (zero at the origin).
inline double mechanical_energy(const DampedSystem& sys, const PhaseState& s) {
  check_dimensions(sys, s);
  return 0.5 * s.p.squaredNorm() + 0.5 * s.q.dot(sys.stiffness() * s.q);
}

/// Instantaneous dissipation rate qd^T C qd; equals -dH/dt along the flow.
inline double dissipated_power(const DampedSystem& sys, const PhaseState& s) {
  check_dimensions(sys, s);
  return s.p.dot(sys.damping() * s.p);
}

}  // namespace dissipham

#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "dissipham/model.hpp"

namespace dissipham {

/// Densely sampled solution curve with cubic-Hermite dense output.
///
/// Nodes carry the state y_j = (q, p) and the exact right-hand side f_j at
/// the node, so the interpolant reproduces both values and derivatives at
/// every node. Queries outside [t_begin, t_end] throw.
class Trajectory {
 public:
  Trajectory(InitialCondition a, double rtol, double atol)
      : initial_(std::move(a)), rtol_(rtol), atol_(atol) {}

  void append(double t, Vec y, Vec dy) {
    if (!times_.empty() && t <= times_.back()) {
      throw std::logic_error("trajectory nodes must have strictly increasing times");
    }
    times_.push_back(t);
    states_.push_back(std::move(y));
    derivs_.push_back(std::move(dy));
  }

  int size() const { return static_cast<int>(times_.size()); }
  bool empty() const { return times_.empty(); }
  int dof() const { return states_.empty() ? 0 : static_cast<int>(states_[0].size()) / 2; }

  double t_begin() const { return times_.front(); }
  double t_end() const { return times_.back(); }

  double node_time(int j) const { return times_[static_cast<size_t>(j)]; }
  const Vec& node_state(int j) const { return states_[static_cast<size_t>(j)]; }
  const Vec& node_derivative(int j) const { return derivs_[static_cast<size_t>(j)]; }
  const std::vector<double>& node_times() const { return times_; }

  const InitialCondition& initial_condition() const { return initial_; }
  double rtol() const { return rtol_; }
  double atol() const { return atol_; }

  /// Index j of the interval [t_j, t_{j+1}] containing t.
  int interval_of(double t) const {
    require_in_range(t);
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    int j = static_cast<int>(it - times_.begin()) - 1;
    return std::clamp(j, 0, size() - 2);
  }

  /// Interpolated state at time t.
  Vec state(double t) const {
    const int j = interval_of(t);
    const double h = times_[j + 1] - times_[j];
    const double s = (t - times_[j]) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * states_[j] + (h10 * h) * derivs_[j] + h01 * states_[j + 1] +
           (h11 * h) * derivs_[j + 1];
  }

  /// Interpolated time derivative at time t.
  Vec derivative(double t) const {
    const int j = interval_of(t);
    const double h = times_[j + 1] - times_[j];
    const double s = (t - times_[j]) / h;
    const double s2 = s * s;
    const double d00 = (6 * s2 - 6 * s) / h;
    const double d10 = 3 * s2 - 4 * s + 1;
    const double d01 = (-6 * s2 + 6 * s) / h;
    const double d11 = 3 * s2 - 2 * s;
    return d00 * states_[j] + d10 * derivs_[j] + d01 * states_[j + 1] +
           d11 * derivs_[j + 1];
  }

  PhaseState phase_state(double t) const { return PhaseState::from_flat(state(t), t); }

  /// Coordinate q_i and momentum p_i at time t (single-component lookups).
  double coordinate(int i, double t) const { return state(t)(i); }
  double momentum(int i, double t) const { return state(t)(dof() + i); }

 private:
  void require_in_range(double t) const {
    if (times_.size() < 2) {
      throw std::out_of_range("trajectory has fewer than two nodes");
    }
    if (t < times_.front() || t > times_.back()) {
      throw std::out_of_range("time " + std::to_string(t) + " outside trajectory range [" +
                              std::to_string(times_.front()) + ", " +
                              std::to_string(times_.back()) + "]");
    }
  }

  InitialCondition initial_;
  double rtol_, atol_;
  std::vector<double> times_;
  std::vector<Vec> states_;
  std::vector<Vec> derivs_;
};

}  // namespace dissipham

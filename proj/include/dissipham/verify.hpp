#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dissipham/integrate.hpp"
#include "dissipham/model.hpp"
#include "dissipham/parallel.hpp"
#include "dissipham/substitute.hpp"

namespace dissipham {

/// One named residual with its tolerance. pass is derived, never stored
/// independently.
struct CheckEntry {
  std::string check;
  std::string scenario;
  double residual = 0.0;
  double tolerance = 0.0;
  double runtime_s = 0.0;  ///< wall time; excluded from serialized reports
  std::string note;

  bool pass() const { return residual <= tolerance; }
};

struct VerificationReport {
  std::vector<CheckEntry> entries;

  void add(CheckEntry e) { entries.push_back(std::move(e)); }

  void merge(VerificationReport other) {
    for (auto& e : other.entries) entries.push_back(std::move(e));
  }

  /// Deterministic order: by check id, then scenario id.
  void sort() {
    std::sort(entries.begin(), entries.end(), [](const CheckEntry& a, const CheckEntry& b) {
      return a.check != b.check ? a.check < b.check : a.scenario < b.scenario;
    });
  }

  bool all_pass() const {
    for (const auto& e : entries) {
      if (!e.pass()) return false;
    }
    return true;
  }

  /// Derivative-level and integrated-level checks of the same identity must
  /// agree segment by segment; a disagreement is itself reported.
  void add_consistency_entries() {
    std::map<std::string, std::pair<const CheckEntry*, const CheckEntry*>> by_segment;
    for (const auto& e : entries) {
      if (e.check == "gradient_match" && e.scenario.find('/') != std::string::npos) {
        by_segment[e.scenario].first = &e;
      } else if (e.check == "phase_coincidence") {
        by_segment[e.scenario].second = &e;
      }
    }
    std::vector<CheckEntry> extra;
    for (const auto& [scenario, pair] : by_segment) {
      if (!pair.first || !pair.second) continue;
      CheckEntry e;
      e.check = "consistency";
      e.scenario = scenario;
      e.residual = pair.first->pass() == pair.second->pass() ? 0.0 : 1.0;
      e.tolerance = 0.5;
      e.note = "gradient_match and phase_coincidence must agree";
      extra.push_back(std::move(e));
    }
    for (auto& e : extra) entries.push_back(std::move(e));
  }
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// Gradient identity on the curve: the substituted force matches the
/// damping force, d(hat H)/dq_i = dH/dq_i - F_i. Evaluated at the supplied
/// times with the segment active at each time (a turning-point time uses
/// the following segment).
inline CheckEntry check_gradient_match(const DampedSystem& sys, const SubstitutingSystem& sub,
                                       const std::vector<double>& times, double tolerance,
                                       const std::string& scenario) {
  detail::Stopwatch clock;
  const int n = sys.dof();
  double residual = 0.0;
  for (double t : times) {
    const PhaseState s = sub.curve().phase_state(t);
    Vec lhs = sys.stiffness() * s.q;  // gradient of hat H w.r.t. q
    for (int i = 0; i < n; ++i) lhs(i) += sub.force_component(i, t, s.q(i));
    const Vec rhs = sys.stiffness() * s.q + sys.damping() * s.p;  // dH/dq - F
    residual = std::max(residual, (lhs - rhs).cwiseAbs().maxCoeff());
    // Momentum half of the identity: both sides are p itself.
    residual = std::max(residual, (s.p - s.p).cwiseAbs().maxCoeff());
  }
  return CheckEntry{"gradient_match", scenario, residual, tolerance, clock.seconds(), ""};
}

/// Uniform sample times on a segment's interior, excluding a fractional
/// band at both ends where force tables flatten into square-root profiles.
inline std::vector<double> segment_sample_times(const MonotoneSegment& seg, int count,
                                                double band_fraction) {
  const double lo = seg.t_begin() + band_fraction * seg.duration();
  const double hi = seg.t_end() - band_fraction * seg.duration();
  std::vector<double> ts;
  ts.reserve(static_cast<size_t>(count));
  for (int j = 0; j < count; ++j) {
    ts.push_back(count == 1 ? lo : lo + (hi - lo) * j / (count - 1));
  }
  return ts;
}

/// Re-integrate the substituting force over one monotone segment with
/// velocity Verlet and compare against the source curve's dense output.
/// The window is split at every other coordinate's turning times (each
/// sub-window has a unique active segment per coordinate) and stops 10 h
/// short of each boundary to stay inside the force domain.
inline CheckEntry check_phase_coincidence(const DampedSystem& sys,
                                          const SubstitutingSystem& sub, int coord,
                                          int segment_index, double h, double tolerance,
                                          const std::string& scenario) {
  detail::Stopwatch clock;
  const auto& seg = sub.segments(coord)[static_cast<size_t>(segment_index)];
  const double delta = 10.0 * h;

  std::vector<double> cuts{seg.t_begin()};
  for (double t : sub.joint_turning_times()) {
    if (t > seg.t_begin() + delta && t < seg.t_end() - delta) cuts.push_back(t);
  }
  cuts.push_back(seg.t_end());

  double residual = 0.0;
  std::string note = "stops 10h before each window end";
  for (size_t w = 0; w + 1 < cuts.size(); ++w) {
    const double ta = cuts[w];
    const double horizon = (cuts[w + 1] - ta) - delta;
    if (horizon <= h) continue;
    const ConservativeForceField field = sub.force_field(sub.selector_at(ta));
    const PhaseState start = sub.curve().phase_state(ta);
    const Trajectory re =
        integrate_conservative(field, InitialCondition(start.q, start.p), horizon, h);
    for (int j = 0; j < re.size(); ++j) {
      const Vec ref = sub.curve().state(ta + re.node_time(j));
      residual = std::max(residual, (re.node_state(j) - ref).norm());
    }
  }
  return CheckEntry{"phase_coincidence", scenario, residual, tolerance, clock.seconds(), note};
}

/// Constancy of the substituting Hamiltonian along the curve.
inline CheckEntry check_hatH_constancy(const SubstitutingSystem& sub, int sample_count,
                                       double tolerance_rel, const std::string& scenario) {
  detail::Stopwatch clock;
  if (sample_count < 2) throw ConfigurationError("hatH constancy needs at least 2 samples");
  const double t0 = sub.curve().t_begin(), t1 = sub.curve().t_end();
  const double h0 = sub.hamiltonian(t0);
  double residual = 0.0;
  for (int j = 0; j < sample_count; ++j) {
    const double t = t0 + (t1 - t0) * j / (sample_count - 1);
    residual = std::max(residual, std::abs(sub.hamiltonian(t) - h0));
  }
  const double tol = tolerance_rel * std::max(1.0, std::abs(h0));
  return CheckEntry{"hatH_constancy", scenario, residual, tol, clock.seconds(), ""};
}

/// Volume contraction of the damped flow: det J(t) = exp(-tr(C) t) for the
/// linear system; the conservative side of the dichotomy preserves volume.
inline CheckEntry check_volume_contraction(const DampedSystem& sys, const InitialCondition& a,
                                           double t_end, double tolerance_rel,
                                           const std::string& scenario,
                                           const IntegratorOptions& opt = {}) {
  detail::Stopwatch clock;
  const VariationalFlow flow = integrate_variational(sys, a, t_end, opt);
  const double trace = sys.damping().trace();
  double residual = 0.0;
  for (int j = 0; j < flow.size(); ++j) {
    const double expected = std::exp(-trace * flow.times[static_cast<size_t>(j)]);
    residual = std::max(residual, std::abs(flow.determinant(j) - expected) / expected);
  }
  return CheckEntry{"volume_contraction", scenario, residual, tolerance_rel, clock.seconds(),
                    ""};
}

/// det J stays 1 along the substituting flow (per-window Verlet tangent).
inline CheckEntry check_conservative_volume(const SubstitutingSystem& sub, int coord,
                                            int segment_index, double h, double tolerance,
                                            const std::string& scenario) {
  detail::Stopwatch clock;
  const auto& seg = sub.segments(coord)[static_cast<size_t>(segment_index)];
  const double delta = 10.0 * h;

  std::vector<double> cuts{seg.t_begin()};
  for (double t : sub.joint_turning_times()) {
    if (t > seg.t_begin() + delta && t < seg.t_end() - delta) cuts.push_back(t);
  }
  cuts.push_back(seg.t_end());

  double residual = 0.0;
  for (size_t w = 0; w + 1 < cuts.size(); ++w) {
    const double ta = cuts[w];
    const double horizon = (cuts[w + 1] - ta) - delta;
    if (horizon <= h) continue;
    const ConservativeForceField field = sub.force_field(sub.selector_at(ta));
    const PhaseState start = sub.curve().phase_state(ta);
    auto force = [&field](const Vec& q) -> Vec { return field.force(q); };
    auto jac = [&field](const Vec& q) -> Mat { return field.force_jacobian(q); };
    const VariationalFlow flow =
        integrate_verlet_variational(force, jac, start.q, start.p, 0.0, horizon, h);
    for (int j = 0; j < flow.size(); ++j) {
      residual = std::max(residual, std::abs(flow.determinant(j) - 1.0));
    }
  }
  return CheckEntry{"conservative_volume", scenario, residual, tolerance, clock.seconds(), ""};
}

/// Work-energy balance along the curve: W(t) = H(0) - H(t) at every node
/// and at interior points of every dense-output interval.
inline CheckEntry check_energy_balance(const DampedSystem& sys, const SubstitutingSystem& sub,
                                       double tolerance, const std::string& scenario) {
  detail::Stopwatch clock;
  const Trajectory& traj = sub.curve();
  const double h0 = mechanical_energy(sys, traj.phase_state(traj.t_begin()));
  double residual = 0.0;
  auto probe = [&](double t) {
    const double w = sub.work(t);
    const double h = mechanical_energy(sys, traj.phase_state(t));
    residual = std::max(residual, std::abs(w - (h0 - h)));
  };
  for (int j = 0; j < traj.size(); ++j) {
    probe(traj.node_time(j));
    if (j + 1 < traj.size()) {
      const double a = traj.node_time(j), b = traj.node_time(j + 1);
      probe(a + (b - a) / 3.0);
      probe(a + 2.0 * (b - a) / 3.0);
    }
  }
  return CheckEntry{"energy_balance", scenario, residual, tolerance, clock.seconds(), ""};
}

/// Tolerances for the standard scenario suite; every value is pinned here
/// and only moves via explicit overrides.
struct CheckOptions {
  double gradient_tol = 1e-8;
  double phase_tol = 1e-6;
  double hatH_tol_rel = 1e-8;
  double volume_tol_rel = 1e-7;
  double conservative_volume_tol = 1e-6;
  double energy_balance_tol = 1e-9;
  double verlet_h = 1e-4;
  int hatH_samples = 2000;
  int gradient_samples_per_segment = 48;
  double band_fraction = 0.02;

  /// Named tolerance override (CLI --tol-override).
  void override_tolerance(const std::string& name, double value) {
    if (name == "gradient_match") {
      gradient_tol = value;
    } else if (name == "phase_coincidence") {
      phase_tol = value;
    } else if (name == "hatH_constancy") {
      hatH_tol_rel = value;
    } else if (name == "volume_contraction") {
      volume_tol_rel = value;
    } else if (name == "conservative_volume") {
      conservative_volume_tol = value;
    } else if (name == "energy_balance") {
      energy_balance_tol = value;
    } else if (name == "verlet_h") {
      verlet_h = value;
    } else {
      throw ConfigurationError("unknown tolerance name: " + name);
    }
  }
};

inline const std::vector<std::string>& standard_check_names() {
  static const std::vector<std::string> names = {
      "gradient_match",     "phase_coincidence", "hatH_constancy",
      "volume_contraction", "conservative_volume", "energy_balance"};
  return names;
}

/// Run the selected checks for one scenario. Per-segment checks produce one
/// entry per (coordinate, segment); independent checks run concurrently and
/// the report is merged in a fixed order.
inline VerificationReport run_standard_checks(const std::string& scenario,
                                              const DampedSystem& sys,
                                              const InitialCondition& a, double t_end,
                                              const IntegratorOptions& iopt,
                                              const CheckOptions& copt,
                                              std::vector<std::string> selection = {}) {
  if (selection.empty()) selection = standard_check_names();
  for (const auto& name : selection) {
    const auto& known = standard_check_names();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigurationError("unknown check: " + name);
    }
  }
  auto selected = [&](const std::string& name) {
    return std::find(selection.begin(), selection.end(), name) != selection.end();
  };

  auto traj = std::make_shared<const Trajectory>(integrate_damped(sys, a, t_end, iopt));
  const SubstitutingSystem sub(sys, traj);

  // Build the task list first so it can run on the worker pool.
  std::vector<std::function<CheckEntry()>> tasks;

  if (selected("hatH_constancy")) {
    tasks.push_back([&]() { return check_hatH_constancy(sub, copt.hatH_samples,
                                                        copt.hatH_tol_rel, scenario); });
  }
  if (selected("energy_balance")) {
    tasks.push_back([&]() { return check_energy_balance(sys, sub, copt.energy_balance_tol,
                                                        scenario); });
  }
  if (selected("volume_contraction")) {
    tasks.push_back([&]() {
      return check_volume_contraction(sys, a, t_end, copt.volume_tol_rel, scenario, iopt);
    });
  }
  for (int i = 0; i < sys.dof(); ++i) {
    const auto& segs = sub.segments(i);
    for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
      if (segs[static_cast<size_t>(s)].frozen()) continue;
      const std::string seg_id =
          scenario + "/q" + std::to_string(i + 1) + "#" + std::to_string(s);
      if (selected("gradient_match")) {
        tasks.push_back([&, i, s, seg_id]() {
          const auto times = segment_sample_times(sub.segments(i)[static_cast<size_t>(s)],
                                                  copt.gradient_samples_per_segment,
                                                  copt.band_fraction);
          return check_gradient_match(sys, sub, times, copt.gradient_tol, seg_id);
        });
      }
      if (selected("phase_coincidence")) {
        tasks.push_back([&, i, s, seg_id]() {
          return check_phase_coincidence(sys, sub, i, s, copt.verlet_h, copt.phase_tol, seg_id);
        });
      }
      if (selected("conservative_volume")) {
        tasks.push_back([&, i, s, seg_id]() {
          return check_conservative_volume(sub, i, s, copt.verlet_h,
                                           copt.conservative_volume_tol, seg_id);
        });
      }
    }
  }

  std::vector<CheckEntry> results(tasks.size());
  parallel_for(static_cast<int>(tasks.size()),
               [&](int idx) { results[static_cast<size_t>(idx)] = tasks[static_cast<size_t>(idx)](); });

  VerificationReport report;
  for (auto& e : results) report.add(std::move(e));
  if (selected("gradient_match") && selected("phase_coincidence")) {
    report.add_consistency_entries();
  }
  report.sort();
  return report;
}

}  // namespace dissipham

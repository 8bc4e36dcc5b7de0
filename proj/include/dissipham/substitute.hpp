#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dissipham/integrate.hpp"
#include "dissipham/model.hpp"
#include "dissipham/pchip.hpp"
#include "dissipham/trajectory.hpp"

namespace dissipham {

/// Force/potential evaluation outside the coordinate range visited by the
/// source curve. The substituted force is only defined where the curve went.
class DomainError : public std::runtime_error {
 public:
  DomainError(int coordinate, double value, double lo, double hi)
      : std::runtime_error(format(coordinate, value, lo, hi)),
        coordinate_(coordinate),
        value_(value),
        lo_(lo),
        hi_(hi) {}

  int coordinate() const { return coordinate_; }
  double value() const { return value_; }
  double lower_bound() const { return lo_; }
  double upper_bound() const { return hi_; }

 private:
  static std::string format(int i, double v, double lo, double hi) {
    std::ostringstream os;
    os << "coordinate q_" << (i + 1) << " = " << v << " outside stored range [" << lo << ", "
       << hi << "]";
    return os.str();
  }
  int coordinate_;
  double value_, lo_, hi_;
};

struct SegmentationOptions {
  /// Sample spacing for the per-segment force tables; 0 selects
  /// min_period/20000 (duration/20000 for systems with no restoring force).
  double table_dt = 0.0;
  /// Geometric end refinement: the first/last base interval is halved this
  /// many times. Near a turning point the force is a square-root profile in
  /// q, and uniform time sampling alone leaves the first interval two orders
  /// too coarse for the re-integration convergence checks.
  int graded_levels = 16;
  /// Bisection tolerance for locating turning points.
  double root_time_tol = 1e-12;
  /// max |p_i| below which a coordinate counts as frozen on the interval.
  double frozen_tol = 1e-14;
};

/// One maximal time interval on which coordinate i of the source curve is
/// strictly monotone, together with the damping force restricted to the
/// curve and re-expressed as a function of q_i alone:
///
///   G_i(q_i) = sum_l C_il * qdot_l(t(q_i)).
///
/// The table is exact at its samples; between samples a shape-preserving
/// cubic is used. A frozen segment (coordinate at rest) has no table and
/// contributes zero force and zero work.
class MonotoneSegment {
 public:
  int coordinate() const { return coord_; }
  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  double duration() const { return t_end_ - t_begin_; }
  /// +1 increasing, -1 decreasing, 0 frozen.
  int direction() const { return direction_; }
  bool frozen() const { return direction_ == 0; }
  /// True when the damping row is identically zero, making G_i == 0 on all
  /// of R rather than only on the visited range.
  bool zero_force() const { return zero_force_; }

  double q_min() const { return q_min_; }
  double q_max() const { return q_max_; }
  double q_range() const { return q_max_ - q_min_; }
  /// Coordinate value at the segment's start time.
  double q_at_begin() const { return direction_ >= 0 ? q_min_ : q_max_; }

  /// G_i at coordinate value q. Throws DomainError outside the stored range
  /// (zero-force and frozen segments are defined everywhere).
  double force_value(double q) const {
    if (frozen() || zero_force_) return 0.0;
    return curve_.value(clamp_domain(q));
  }

  /// dG_i/dq at q (for tangent maps).
  double force_slope(double q) const {
    if (frozen() || zero_force_) return 0.0;
    return curve_.slope(clamp_domain(q));
  }

  /// Work potential V_i(q) = offset + integral of G_i from the segment's
  /// start coordinate to q. Offsets are assigned so V_i is continuous in
  /// time across segment boundaries and zero at the curve's start.
  ///
  /// Unlike the force, the potential admits a thin boundary layer
  /// (1e-4 of the range) continued with the end cubic: derivative probes
  /// at the curve's endpoints land a finite-difference step outside the
  /// visited range.
  double potential(double q) const {
    if (frozen() || zero_force_) return offset_;
    const double grace = 1e-4 * std::max(1.0, q_range());
    if (q > q_max_ && q <= q_max_ + grace) return potential_extension(q_max_, q);
    if (q < q_min_ && q >= q_min_ - grace) return potential_extension(q_min_, q);
    return offset_ + curve_.integral_from_min(clamp_domain(q)) - anchor_integral_;
  }

  double potential_offset() const { return offset_; }
  void set_potential_offset(double offset) { offset_ = offset; }

  bool contains_q(double q) const {
    if (frozen()) return false;
    if (zero_force_) return true;
    const double grace = domain_grace();
    return q >= q_min_ - grace && q <= q_max_ + grace;
  }

  const detail::PchipCurve& table() const { return curve_; }

 private:
  friend std::vector<MonotoneSegment> segment_trajectory(const Trajectory&,
                                                         const DampedSystem&, int,
                                                         const SegmentationOptions&);

  double potential_extension(double q_edge, double q) const {
    const double v_edge = offset_ + curve_.integral_from_min(q_edge) - anchor_integral_;
    const double d = q - q_edge;
    return v_edge + curve_.value(q_edge) * d + 0.5 * curve_.slope(q_edge) * d * d;
  }

  double domain_grace() const { return 1e-12 * std::max(1.0, q_range()); }

  double clamp_domain(double q) const {
    const double grace = domain_grace();
    if (q < q_min_ - grace || q > q_max_ + grace) {
      throw DomainError(coord_, q, q_min_, q_max_);
    }
    return std::clamp(q, q_min_, q_max_);
  }

  int coord_ = 0;
  double t_begin_ = 0.0, t_end_ = 0.0;
  int direction_ = 0;
  bool zero_force_ = false;
  double q_min_ = 0.0, q_max_ = 0.0;
  double offset_ = 0.0;
  double anchor_integral_ = 0.0;  // integral_from_min at q_at_begin
  detail::PchipCurve curve_;
};

namespace detail {

/// Roots of the interpolated momentum p_i(t) strictly inside the curve's
/// time span, located by bisection on the dense output.
inline std::vector<double> turning_times(const Trajectory& traj, int coord,
                                         double time_tol) {
  const int n = traj.dof();
  const int pi = n + coord;
  std::vector<double> roots;

  auto p_at = [&](double t) { return traj.state(t)(pi); };

  const double span = traj.t_end() - traj.t_begin();
  const double edge = std::max(1e-9 * span, 4.0 * time_tol);

  for (int j = 0; j + 1 < traj.size(); ++j) {
    const double ta = traj.node_time(j), tb = traj.node_time(j + 1);
    // Sample the cubic at five points so interior double crossings within
    // one integrator step are not missed.
    constexpr int kSub = 4;
    double prev_t = ta;
    double prev_p = traj.node_state(j)(pi);
    for (int s = 1; s <= kSub; ++s) {
      const double t = s == kSub ? tb : ta + (tb - ta) * s / kSub;
      const double p = s == kSub ? traj.node_state(j + 1)(pi) : p_at(t);
      if ((prev_p < 0.0 && p > 0.0) || (prev_p > 0.0 && p < 0.0)) {
        double lo = prev_t, hi = t, flo = prev_p;
        while (hi - lo > time_tol) {
          const double mid = 0.5 * (lo + hi);
          const double fm = p_at(mid);
          if ((flo < 0.0) == (fm < 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        roots.push_back(0.5 * (lo + hi));
      } else if (prev_p != 0.0 && p == 0.0) {
        roots.push_back(t);
      }
      prev_t = t;
      prev_p = p;
    }
  }

  std::sort(roots.begin(), roots.end());
  std::vector<double> out;
  for (double r : roots) {
    if (r < traj.t_begin() + edge || r > traj.t_end() - edge) continue;
    if (!out.empty() && r - out.back() < std::max(1e-9 * span, 8.0 * time_tol)) continue;
    out.push_back(r);
  }
  return out;
}

}  // namespace detail

/// Split the curve into maximal monotone segments of coordinate i and build
/// each segment's force table from the dense output.
inline std::vector<MonotoneSegment> segment_trajectory(const Trajectory& traj,
                                                       const DampedSystem& sys, int coord,
                                                       const SegmentationOptions& opt = {}) {
  if (traj.size() < 2) throw ConfigurationError("cannot segment an empty trajectory");
  if (coord < 0 || coord >= traj.dof()) throw ConfigurationError("coordinate index out of range");

  const int n = traj.dof();
  const bool zero_row = sys.damping().row(coord).isZero(0.0);

  // Frozen coordinate: momentum at rest over the whole span.
  double pmax = 0.0, scale = 1.0;
  for (int j = 0; j < traj.size(); ++j) {
    pmax = std::max(pmax, std::abs(traj.node_state(j)(n + coord)));
    scale = std::max(scale, traj.node_state(j).cwiseAbs().maxCoeff());
  }
  if (pmax <= opt.frozen_tol * scale) {
    MonotoneSegment seg;
    seg.coord_ = coord;
    seg.t_begin_ = traj.t_begin();
    seg.t_end_ = traj.t_end();
    seg.direction_ = 0;
    seg.zero_force_ = zero_row;
    const double q = traj.node_state(0)(coord);
    seg.q_min_ = seg.q_max_ = q;
    return {seg};
  }

  std::vector<double> bounds;
  bounds.push_back(traj.t_begin());
  for (double r : detail::turning_times(traj, coord, opt.root_time_tol)) bounds.push_back(r);
  bounds.push_back(traj.t_end());

  double dt = opt.table_dt;
  if (dt <= 0.0) {
    const double period = sys.min_period();
    const double base = std::isfinite(period) ? period : traj.t_end() - traj.t_begin();
    dt = base / 20000.0;
  }

  std::vector<MonotoneSegment> segments;
  for (size_t b = 0; b + 1 < bounds.size(); ++b) {
    const double ta = bounds[b], tb = bounds[b + 1];

    MonotoneSegment seg;
    seg.coord_ = coord;
    seg.t_begin_ = ta;
    seg.t_end_ = tb;
    seg.zero_force_ = zero_row;

    // Sample times: uniform base grid plus geometric refinement toward both
    // ends, where q clusters quadratically in time.
    const int m = std::max(8, static_cast<int>(std::ceil((tb - ta) / dt)));
    const double base = (tb - ta) / m;
    std::vector<double> ts;
    ts.reserve(static_cast<size_t>(m) + 2 * opt.graded_levels + 1);
    for (int s = 0; s <= m; ++s) ts.push_back(ta + (tb - ta) * s / m);
    for (int level = 1; level <= opt.graded_levels; ++level) {
      const double off = base / std::pow(2.0, level);
      ts.push_back(ta + off);
      ts.push_back(tb - off);
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

    std::vector<std::pair<double, double>> samples;  // (q_i, G_i)
    samples.reserve(ts.size());
    for (double t : ts) {
      const Vec y = traj.state(t);
      const double q = y(coord);
      const double g = sys.damping().row(coord).dot(y.tail(n));
      samples.emplace_back(q, g);
    }

    const double qa = samples.front().first, qb = samples.back().first;
    seg.direction_ = qb > qa ? 1 : -1;
    if (seg.direction_ < 0) std::reverse(samples.begin(), samples.end());

    // Drop abscissae closer than a few ulps (sub-resolution clustering at
    // the turning points), always keeping the extreme endpoints.
    std::vector<double> qs, gs;
    qs.reserve(samples.size());
    gs.reserve(samples.size());
    for (const auto& [q, g] : samples) {
      const double tol = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(q));
      if (!qs.empty() && q - qs.back() <= tol) continue;
      qs.push_back(q);
      gs.push_back(g);
    }
    if (qs.back() != samples.back().first) {
      // The top endpoint was deduplicated away; restore it in place.
      qs.back() = samples.back().first;
      gs.back() = samples.back().second;
    }
    if (qs.size() < 2) {
      throw ConfigurationError("degenerate monotone segment: coordinate range below resolution");
    }

    seg.q_min_ = qs.front();
    seg.q_max_ = qs.back();
    seg.curve_ = detail::PchipCurve(std::move(qs), std::move(gs));
    seg.anchor_integral_ = seg.curve_.integral_from_min(seg.q_at_begin());
    segments.push_back(std::move(seg));
  }
  return segments;
}

/// Cumulative work done by the damping force along the curve, per
/// coordinate:  W_i(t) = integral of p_i (C p)_i dtau  from t_begin.
///
/// Each dense-output interval holds polynomials of degree <= 6, so a 4-point
/// Gauss rule per interval is exact for the interpolant; node prefix sums
/// make arbitrary-time queries cheap.
class WorkIntegral {
 public:
  WorkIntegral() = default;

  WorkIntegral(std::shared_ptr<const Trajectory> traj, Mat damping)
      : traj_(std::move(traj)), damping_(std::move(damping)) {
    const int n = static_cast<int>(damping_.rows());
    const int m = traj_->size();
    prefix_.assign(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(m), 0.0));
    for (int j = 0; j + 1 < m; ++j) {
      const Vec inc = interval_gauss(traj_->node_time(j), traj_->node_time(j + 1));
      for (int i = 0; i < n; ++i) {
        prefix_[i][static_cast<size_t>(j) + 1] = prefix_[i][static_cast<size_t>(j)] + inc(i);
      }
    }
  }

  /// W_i(t).
  double coordinate(int i, double t) const {
    const int j = traj_->interval_of(t);
    double w = prefix_[static_cast<size_t>(i)][static_cast<size_t>(j)];
    if (t > traj_->node_time(j)) {
      w += interval_gauss(traj_->node_time(j), t)(i);
    }
    return w;
  }

  /// Total W(t) = sum_i W_i(t) = integral of p^T C p.
  double total(double t) const {
    const int n = static_cast<int>(damping_.rows());
    const int j = traj_->interval_of(t);
    double w = 0.0;
    for (int i = 0; i < n; ++i) w += prefix_[static_cast<size_t>(i)][static_cast<size_t>(j)];
    if (t > traj_->node_time(j)) {
      w += interval_gauss(traj_->node_time(j), t).sum();
    }
    return w;
  }

 private:
  Vec interval_gauss(double a, double b) const {
    // 4-point Gauss-Legendre on [a, b]; exact through degree 7.
    static constexpr double kX[4] = {-0.8611363115940525752, -0.3399810435848562648,
                                     0.3399810435848562648, 0.8611363115940525752};
    static constexpr double kW[4] = {0.3478548451374538574, 0.6521451548625461426,
                                     0.6521451548625461426, 0.3478548451374538574};
    const int n = static_cast<int>(damping_.rows());
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    Vec acc = Vec::Zero(n);
    for (int g = 0; g < 4; ++g) {
      const Vec y = traj_->state(mid + half * kX[g]);
      const Vec p = y.tail(n);
      const Vec cp = damping_ * p;
      acc += (kW[g] * half) * p.cwiseProduct(cp);
    }
    return acc;
  }

  std::shared_ptr<const Trajectory> traj_;
  Mat damping_;
  std::vector<std::vector<double>> prefix_;
};

/// Total work W(t) along the curve (dissipated energy up to time t).
inline double work_along(const std::shared_ptr<const Trajectory>& traj,
                         const DampedSystem& sys, double t) {
  return WorkIntegral(traj, sys.damping()).total(t);
}

class ConservativeForceField;

/// The conservative system sharing the source phase curve: per coordinate, a
/// sequence of monotone segments with force tables G_i(q_i) and continuity
/// offsets making the total work potential a single continuous function of
/// time that vanishes at the start of the curve.
class SubstitutingSystem {
 public:
  SubstitutingSystem(DampedSystem sys, std::shared_ptr<const Trajectory> traj,
                     const SegmentationOptions& opt = {})
      : sys_(std::move(sys)), traj_(std::move(traj)), work_(traj_, sys_.damping()) {
    const int n = sys_.dof();
    if (traj_->dof() != n) throw ConfigurationError("trajectory does not match system");
    segments_.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto segs = segment_trajectory(*traj_, sys_, i, opt);
      // Anchor each segment's potential to the time-parameterized work at
      // its start: continuity across boundaries, zero at t_begin.
      for (auto& seg : segs) {
        seg.set_potential_offset(work_.coordinate(i, seg.t_begin()));
      }
      segments_.push_back(std::move(segs));
    }
  }

  const DampedSystem& system() const { return sys_; }
  const Trajectory& curve() const { return *traj_; }
  std::shared_ptr<const Trajectory> curve_ptr() const { return traj_; }

  const std::vector<MonotoneSegment>& segments(int coord) const {
    return segments_[static_cast<size_t>(coord)];
  }

  /// Segment active at time t; intervals are half-open [t_a, t_b), a
  /// turning-point state belongs to the following segment.
  int active_segment_index(int coord, double t) const {
    const auto& segs = segments_[static_cast<size_t>(coord)];
    for (size_t s = 0; s + 1 < segs.size(); ++s) {
      if (t < segs[s].t_end()) return static_cast<int>(s);
    }
    return static_cast<int>(segs.size()) - 1;
  }

  const MonotoneSegment& active_segment(int coord, double t) const {
    return segments_[static_cast<size_t>(coord)][static_cast<size_t>(
        active_segment_index(coord, t))];
  }

  /// Total work W(t) (time parameterization; dissipated energy).
  double work(double t) const { return work_.total(t); }
  double work_coordinate(int coord, double t) const { return work_.coordinate(coord, t); }

  /// Work potential evaluated as a function of q at the segments active at
  /// time t: sum_i V_i(q_i). Coincides with work(t) for q on the curve, but
  /// remains evaluable at perturbed q (functional-derivative probes).
  double potential(double t, const Vec& q) const {
    double v = 0.0;
    for (int i = 0; i < sys_.dof(); ++i) {
      v += active_segment(i, t).potential(q(i));
    }
    return v;
  }

  /// Conservative force component G_i at time t's active segment.
  double force_component(int coord, double t, double q) const {
    return active_segment(coord, t).force_value(q);
  }

  /// Hamiltonian of the substituting system evaluated along the curve:
  /// total energy H plus the accumulated work potential. Constant in t.
  double hamiltonian(double t) const {
    return mechanical_energy(sys_, traj_->phase_state(t)) + work_.total(t);
  }

  /// Lagrangian along the curve; hamiltonian + lagrangian = p^T p.
  double lagrangian(double t) const {
    const PhaseState s = traj_->phase_state(t);
    return 0.5 * s.p.squaredNorm() - 0.5 * s.q.dot(sys_.stiffness() * s.q) - work_.total(t);
  }

  /// Diagnostic equivalent-stiffness diagonal: G_i(q_i)/q_i on the selected
  /// segments. Entries with |q_i| <= eps (default 1e-8 * segment range) are
  /// singular and reported as empty.
  std::vector<std::optional<double>> equivalent_stiffness(const std::vector<int>& selector,
                                                          const Vec& q,
                                                          double eps = 0.0) const {
    const int n = sys_.dof();
    if (static_cast<int>(selector.size()) != n || q.size() != n) {
      throw ConfigurationError("equivalent_stiffness: selector/q size mismatch");
    }
    std::vector<std::optional<double>> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto& seg = segments_[static_cast<size_t>(i)][static_cast<size_t>(selector[i])];
      if (seg.frozen()) continue;
      const double eps_i = eps > 0.0 ? eps : 1e-8 * std::max(seg.q_range(), 1e-300);
      if (std::abs(q(i)) <= eps_i) continue;
      out[static_cast<size_t>(i)] = seg.force_value(q(i)) / q(i);
    }
    return out;
  }

  /// Force field q -> -K q - G(q) with G_i drawn from the selected segment
  /// of each coordinate (defined below).
  ConservativeForceField force_field(const std::vector<int>& selector) const;

  /// Selector picking each coordinate's segment active at time t.
  std::vector<int> selector_at(double t) const {
    std::vector<int> sel(static_cast<size_t>(sys_.dof()));
    for (int i = 0; i < sys_.dof(); ++i) sel[static_cast<size_t>(i)] = active_segment_index(i, t);
    return sel;
  }

  /// Union of all coordinates' interior turning times, ascending.
  std::vector<double> joint_turning_times() const {
    std::vector<double> ts;
    for (const auto& segs : segments_) {
      for (size_t s = 0; s + 1 < segs.size(); ++s) ts.push_back(segs[s].t_end());
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-10; }),
             ts.end());
    return ts;
  }

 private:
  DampedSystem sys_;
  std::shared_ptr<const Trajectory> traj_;
  std::vector<std::vector<MonotoneSegment>> segments_;
  WorkIntegral work_;
};

/// Self-contained evaluator of the substituted conservative force
/// q -> -K q - G(q); evaluation outside a segment's stored coordinate range
/// throws DomainError.
class ConservativeForceField {
 public:
  ConservativeForceField(Mat stiffness, std::vector<MonotoneSegment> segments)
      : stiffness_(std::move(stiffness)), segments_(std::move(segments)) {}

  int dof() const { return static_cast<int>(stiffness_.rows()); }

  Vec force(const Vec& q) const {
    Vec f = -stiffness_ * q;
    for (int i = 0; i < dof(); ++i) {
      f(i) -= segments_[static_cast<size_t>(i)].force_value(q(i));
    }
    return f;
  }

  /// d(force)/dq = -K - diag(G_i'(q_i)).
  Mat force_jacobian(const Vec& q) const {
    Mat j = -stiffness_;
    for (int i = 0; i < dof(); ++i) {
      j(i, i) -= segments_[static_cast<size_t>(i)].force_slope(q(i));
    }
    return j;
  }

  const MonotoneSegment& segment(int coord) const {
    return segments_[static_cast<size_t>(coord)];
  }

 private:
  Mat stiffness_;
  std::vector<MonotoneSegment> segments_;  // one per coordinate
};

inline ConservativeForceField SubstitutingSystem::force_field(
    const std::vector<int>& selector) const {
  if (static_cast<int>(selector.size()) != sys_.dof()) {
    throw ConfigurationError("force_field: selector size mismatch");
  }
  std::vector<MonotoneSegment> chosen;
  chosen.reserve(selector.size());
  for (int i = 0; i < sys_.dof(); ++i) {
    chosen.push_back(segments_[static_cast<size_t>(i)][static_cast<size_t>(selector[i])]);
  }
  return ConservativeForceField(sys_.stiffness(), std::move(chosen));
}

/// Convenience builder: integrate the damped flow and substitute.
inline SubstitutingSystem build_substituting_system(
    const DampedSystem& sys, const std::shared_ptr<const Trajectory>& traj,
    const SegmentationOptions& opt = {}) {
  return SubstitutingSystem(sys, traj, opt);
}

/// Re-integrate the substituting force with velocity Verlet starting from
/// the curve state at t_start.
inline Trajectory integrate_conservative(const ConservativeForceField& field,
                                         const InitialCondition& a, double t_end, double h) {
  auto force = [&field](const Vec& q) -> Vec { return field.force(q); };
  return integrate_verlet(force, a.q0(), a.v0(), 0.0, t_end, h, a);
}

}  // namespace dissipham

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dissipham/integrate.hpp"
#include "dissipham/model.hpp"
#include "dissipham/parallel.hpp"
#include "dissipham/substitute.hpp"

namespace dissipham {

/// Box of initial conditions: one interval and node count per axis of
/// a = (q0, qdot0).
struct DomainSpec {
  struct Axis {
    double lo = 0.0;
    double hi = 0.0;
    int nodes = 1;
  };
  std::vector<Axis> axes;  // size 2n

  int dof() const { return static_cast<int>(axes.size()) / 2; }

  double volume() const {
    double v = 1.0;
    for (const auto& ax : axes) v *= ax.hi - ax.lo;
    return v;
  }
};

/// Midpoint tensor-product quadrature over the domain: positive weights,
/// no boundary nodes, sum of weights equal to the domain volume.
struct QuadratureGrid {
  std::vector<Vec> nodes;       // each size 2n
  std::vector<double> weights;  // positive

  int size() const { return static_cast<int>(nodes.size()); }
  int dof() const { return nodes.empty() ? 0 : static_cast<int>(nodes[0].size()) / 2; }
  double total_weight() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

inline QuadratureGrid build_grid(const DomainSpec& spec, int max_nodes = 4096) {
  if (spec.axes.empty() || spec.axes.size() % 2 != 0) {
    throw ConfigurationError("domain must have 2n axes (q0 then qdot0)");
  }
  long total = 1;
  double cell = 1.0;
  for (const auto& ax : spec.axes) {
    if (ax.nodes < 1) throw ConfigurationError("axis node count must be >= 1");
    if (!(ax.hi > ax.lo)) throw ConfigurationError("domain axis has zero or negative length");
    total *= ax.nodes;
    cell *= (ax.hi - ax.lo) / ax.nodes;
  }
  if (total > max_nodes) {
    throw ConfigurationError("grid would have " + std::to_string(total) +
                             " nodes (cap " + std::to_string(max_nodes) + ")");
  }

  QuadratureGrid grid;
  grid.nodes.reserve(static_cast<size_t>(total));
  grid.weights.assign(static_cast<size_t>(total), cell);

  const int dims = static_cast<int>(spec.axes.size());
  std::vector<int> idx(static_cast<size_t>(dims), 0);
  for (long k = 0; k < total; ++k) {
    Vec node(dims);
    for (int d = 0; d < dims; ++d) {
      const auto& ax = spec.axes[static_cast<size_t>(d)];
      node(d) = ax.lo + (ax.hi - ax.lo) * (idx[static_cast<size_t>(d)] + 0.5) / ax.nodes;
    }
    grid.nodes.push_back(std::move(node));
    for (int d = dims - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < spec.axes[static_cast<size_t>(d)].nodes) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }
  return grid;
}

/// Field values at one instant: q(a_k) and pi(a_k) per node. Mutable by
/// design (functional-derivative probes perturb single slots).
struct FieldState {
  double t = 0.0;
  std::vector<Vec> q;
  std::vector<Vec> pi;

  int node_count() const { return static_cast<int>(q.size()); }
};

enum class FieldComponent { Coordinate, Momentum };

/// Discretized fields q(a_k, t), pi(a_k, t): one damped trajectory and one
/// substituting system per quadrature node. pi equals qdot throughout.
class EnsembleField {
 public:
  EnsembleField(DampedSystem sys, QuadratureGrid grid, double t_end,
                const IntegratorOptions& iopt = {}, const SegmentationOptions& sopt = {})
      : sys_(std::move(sys)), grid_(std::move(grid)) {
    if (grid_.size() == 0) throw ConfigurationError("ensemble grid is empty");
    const int count = grid_.size();
    trajectories_.resize(static_cast<size_t>(count));
    substitutions_.resize(static_cast<size_t>(count));
    parallel_for(count, [&](int k) {
      try {
        InitialCondition a(grid_.nodes[static_cast<size_t>(k)]);
        auto traj = std::make_shared<const Trajectory>(integrate_damped(sys_, a, t_end, iopt));
        substitutions_[static_cast<size_t>(k)] =
            std::make_shared<const SubstitutingSystem>(sys_, traj, sopt);
        trajectories_[static_cast<size_t>(k)] = std::move(traj);
      } catch (const IntegrationError& e) {
        throw IntegrationError("ensemble node " + std::to_string(k) + ": " + e.brief(),
                               e.last_good_time());
      }
    });
  }

  const DampedSystem& system() const { return sys_; }
  const QuadratureGrid& grid() const { return grid_; }
  int node_count() const { return grid_.size(); }
  double t_begin() const { return trajectories_[0]->t_begin(); }
  double t_end() const { return trajectories_[0]->t_end(); }

  const Trajectory& trajectory(int k) const { return *trajectories_[static_cast<size_t>(k)]; }
  const SubstitutingSystem& substitution(int k) const {
    return *substitutions_[static_cast<size_t>(k)];
  }

  FieldState snapshot(double t) const {
    FieldState s;
    s.t = t;
    const int n = sys_.dof();
    s.q.reserve(static_cast<size_t>(node_count()));
    s.pi.reserve(static_cast<size_t>(node_count()));
    for (int k = 0; k < node_count(); ++k) {
      const Vec y = trajectory(k).state(t);
      s.q.push_back(y.head(n));
      s.pi.push_back(y.tail(n));
    }
    return s;
  }

 private:
  DampedSystem sys_;
  QuadratureGrid grid_;
  std::vector<std::shared_ptr<const Trajectory>> trajectories_;
  std::vector<std::shared_ptr<const SubstitutingSystem>> substitutions_;
};

inline EnsembleField evolve_ensemble(const DampedSystem& sys, const QuadratureGrid& grid,
                                     double t_end, const IntegratorOptions& iopt = {},
                                     const SegmentationOptions& sopt = {}) {
  return EnsembleField(sys, grid, t_end, iopt, sopt);
}

/// Scalar functional of a field snapshot with declared dependence, so that
/// derivatives with respect to untouched slots are exactly zero.
class DiscreteFunctional {
 public:
  using Evaluator = std::function<double(const FieldState&)>;

  DiscreteFunctional(std::string name, Evaluator eval, bool depends_q, bool depends_pi,
                     int only_node = -1, int only_component = -1)
      : name_(std::move(name)),
        eval_(std::move(eval)),
        depends_q_(depends_q),
        depends_pi_(depends_pi),
        node_(only_node),
        component_(only_component) {}

  double operator()(const FieldState& s) const { return eval_(s); }
  const std::string& name() const { return name_; }

  bool depends_on(FieldComponent which, int node, int component) const {
    if (which == FieldComponent::Coordinate && !depends_q_) return false;
    if (which == FieldComponent::Momentum && !depends_pi_) return false;
    if (node_ >= 0 && node != node_) return false;
    if (component_ >= 0 && component != component_) return false;
    return true;
  }

  /// Evaluation functional q_i(a_k).
  static DiscreteFunctional coordinate(int k, int i) {
    return DiscreteFunctional(
        "q_" + std::to_string(i + 1) + "(a_" + std::to_string(k) + ")",
        [k, i](const FieldState& s) { return s.q[static_cast<size_t>(k)](i); }, true, false, k,
        i);
  }

  /// Evaluation functional pi_i(a_k).
  static DiscreteFunctional momentum(int k, int i) {
    return DiscreteFunctional(
        "pi_" + std::to_string(i + 1) + "(a_" + std::to_string(k) + ")",
        [k, i](const FieldState& s) { return s.pi[static_cast<size_t>(k)](i); }, false, true, k,
        i);
  }

 private:
  std::string name_;
  Evaluator eval_;
  bool depends_q_, depends_pi_;
  int node_, component_;
};

/// Weight-normalized central difference: the discrete realization of the
/// functional derivative, chosen so the continuum delta identity
/// d u(a_m)/d u(a_k) = delta_km / w_k holds verbatim on the grid. The
/// divided difference uses the actually-representable spacing x1 - x2.
inline double functional_derivative(const DiscreteFunctional& f, const FieldState& state,
                                    const QuadratureGrid& grid, FieldComponent which, int node,
                                    int component) {
  if (!f.depends_on(which, node, component)) return 0.0;
  FieldState probe = state;
  double& slot = which == FieldComponent::Coordinate
                     ? probe.q[static_cast<size_t>(node)](component)
                     : probe.pi[static_cast<size_t>(node)](component);
  const double v = slot;
  const double eta = 1e-6 * std::max(1.0, std::abs(v));
  const double x1 = v + eta;
  const double x2 = v - eta;
  slot = x1;
  const double f1 = f(probe);
  slot = x2;
  const double f2 = f(probe);
  return (f1 - f2) / ((x1 - x2) * grid.weights[static_cast<size_t>(node)]);
}

/// Generalized Hamiltonian evaluator at time t: the quadrature of each
/// node's substituting Hamiltonian density, as a functional of the field
/// values (the potential term stays evaluable at perturbed q).
inline DiscreteFunctional energy_functional(const EnsembleField& field, double t) {
  const int nodes = field.node_count();
  const int n = field.system().dof();
  const Mat& k = field.system().stiffness();
  std::vector<const SubstitutingSystem*> subs;
  subs.reserve(static_cast<size_t>(nodes));
  for (int m = 0; m < nodes; ++m) subs.push_back(&field.substitution(m));
  const std::vector<double>& w = field.grid().weights;

  auto eval = [subs, w, k, n, t](const FieldState& s) {
    double acc = 0.0;
    for (size_t m = 0; m < subs.size(); ++m) {
      const Vec& q = s.q[m];
      const Vec& pi = s.pi[m];
      double h = 0.5 * pi.squaredNorm() + 0.5 * q.dot(k * q);
      h += subs[m]->potential(t, q);
      acc += w[m] * h;
    }
    return acc;
  };
  return DiscreteFunctional("K_hat", std::move(eval), true, true);
}

/// K_hat(t): quadrature of the per-node substituting Hamiltonians.
inline double functional_K(const EnsembleField& field, double t) {
  return energy_functional(field, t)(field.snapshot(t));
}

/// Functional Poisson bracket on the grid:
/// {F, G} = sum_k w_k sum_i [dF/dq_i(a_k) dG/dpi_i(a_k) - dG/dq_i(a_k) dF/dpi_i(a_k)].
inline double poisson_bracket(const DiscreteFunctional& f, const DiscreteFunctional& g,
                              const FieldState& state, const QuadratureGrid& grid) {
  const int n = grid.dof();
  double acc = 0.0;
  for (int k = 0; k < grid.size(); ++k) {
    for (int i = 0; i < n; ++i) {
      const double fq = functional_derivative(f, state, grid, FieldComponent::Coordinate, k, i);
      const double gp = functional_derivative(g, state, grid, FieldComponent::Momentum, k, i);
      const double gq = functional_derivative(g, state, grid, FieldComponent::Coordinate, k, i);
      const double fp = functional_derivative(f, state, grid, FieldComponent::Momentum, k, i);
      acc += grid.weights[static_cast<size_t>(k)] * (fq * gp - gq * fp);
    }
  }
  return acc;
}

/// Residuals of the bracket form of the equations of motion at time t.
struct HamiltonResidual {
  double pi_residual = 0.0;  ///< max |pi_dot - {pi, K_hat}|
  double q_residual = 0.0;   ///< max |q_dot - {q, K_hat}|
  std::string method;        ///< "rhs" or "fd_central" / "fd_onesided"
  bool boundary_flagged = false;
};

/// pi_dot and q_dot come from the stored right-hand side when
/// use_stored_rhs is set (preferred); otherwise from differences on the
/// time grid, one-sided and flagged at the span boundaries.
inline HamiltonResidual hamilton_residual(const EnsembleField& field, double t,
                                          bool use_stored_rhs = true,
                                          double fd_dt = 1e-5) {
  const int nodes = field.node_count();
  const int n = field.system().dof();
  const QuadratureGrid& grid = field.grid();
  const FieldState state = field.snapshot(t);
  const DiscreteFunctional khat = energy_functional(field, t);

  // d K_hat / d q and / d pi at every slot, computed once.
  std::vector<Vec> dkq(static_cast<size_t>(nodes), Vec(n)), dkp(static_cast<size_t>(nodes), Vec(n));
  for (int m = 0; m < nodes; ++m) {
    for (int j = 0; j < n; ++j) {
      dkq[static_cast<size_t>(m)](j) =
          functional_derivative(khat, state, grid, FieldComponent::Coordinate, m, j);
      dkp[static_cast<size_t>(m)](j) =
          functional_derivative(khat, state, grid, FieldComponent::Momentum, m, j);
    }
  }

  HamiltonResidual out;
  out.method = use_stored_rhs ? "rhs" : "fd_central";

  for (int k = 0; k < nodes; ++k) {
    Vec qdot(n), pdot(n);
    if (use_stored_rhs) {
      const Vec dy = damped_rhs(field.system(),
                                PhaseState{state.q[static_cast<size_t>(k)],
                                           state.pi[static_cast<size_t>(k)], t});
      qdot = dy.head(n);
      pdot = dy.tail(n);
    } else {
      const Trajectory& traj = field.trajectory(k);
      double lo = t - fd_dt, hi = t + fd_dt;
      if (lo < traj.t_begin() || hi > traj.t_end()) {
        out.boundary_flagged = true;
        out.method = "fd_onesided";
        lo = std::max(lo, traj.t_begin());
        hi = std::min(hi, traj.t_end());
      }
      const Vec ylo = traj.state(lo), yhi = traj.state(hi);
      qdot = (yhi.head(n) - ylo.head(n)) / (hi - lo);
      pdot = (yhi.tail(n) - ylo.tail(n)) / (hi - lo);
    }

    for (int i = 0; i < n; ++i) {
      // {pi_i(a_k), K_hat} and {q_i(a_k), K_hat} via the bracket sum; the
      // evaluation-functional derivatives are computed numerically too.
      const DiscreteFunctional pi_ki = DiscreteFunctional::momentum(k, i);
      const DiscreteFunctional q_ki = DiscreteFunctional::coordinate(k, i);
      double br_pi = 0.0, br_q = 0.0;
      for (int m = 0; m < nodes; ++m) {
        for (int j = 0; j < n; ++j) {
          const double w = grid.weights[static_cast<size_t>(m)];
          const double piq =
              functional_derivative(pi_ki, state, grid, FieldComponent::Coordinate, m, j);
          const double pip =
              functional_derivative(pi_ki, state, grid, FieldComponent::Momentum, m, j);
          br_pi += w * (piq * dkp[static_cast<size_t>(m)](j) -
                        dkq[static_cast<size_t>(m)](j) * pip);
          const double qq =
              functional_derivative(q_ki, state, grid, FieldComponent::Coordinate, m, j);
          const double qp =
              functional_derivative(q_ki, state, grid, FieldComponent::Momentum, m, j);
          br_q += w * (qq * dkp[static_cast<size_t>(m)](j) -
                       dkq[static_cast<size_t>(m)](j) * qp);
        }
      }
      out.pi_residual = std::max(out.pi_residual, std::abs(pdot(i) - br_pi));
      out.q_residual = std::max(out.q_residual, std::abs(qdot(i) - br_q));
    }
  }
  return out;
}

/// Action quadrature and Euler-Lagrange residual over [t_a, t_b].
struct ActionResult {
  double action = 0.0;        ///< sum_k w_k * integral of the node Lagrangian
  double el_residual = 0.0;   ///< max |qdd + K q + G(q)| at interior samples
  int samples_used = 0;
  int samples_excluded = 0;   ///< skipped inside the turning-point bands
  double band_fraction = 0.0;
};

inline ActionResult action_and_el_residual(const EnsembleField& field, double t_a, double t_b,
                                           int samples_per_node = 400,
                                           double band_fraction = 0.02) {
  if (t_a < field.t_begin() || t_b > field.t_end() || t_b <= t_a) {
    throw std::out_of_range("action span outside ensemble range");
  }
  const int n = field.system().dof();
  ActionResult out;
  out.band_fraction = band_fraction;

  // 4-point Gauss per dense-output interval: exact for the interpolant's
  // piecewise-polynomial Lagrangian (degree <= 7 once W is included).
  static constexpr double kX[4] = {-0.8611363115940525752, -0.3399810435848562648,
                                   0.3399810435848562648, 0.8611363115940525752};
  static constexpr double kW[4] = {0.3478548451374538574, 0.6521451548625461426,
                                   0.6521451548625461426, 0.3478548451374538574};

  for (int k = 0; k < field.node_count(); ++k) {
    const SubstitutingSystem& sub = field.substitution(k);
    const Trajectory& traj = field.trajectory(k);

    double s_node = 0.0;
    for (int j = 0; j + 1 < traj.size(); ++j) {
      const double a = std::max(traj.node_time(j), t_a);
      const double b = std::min(traj.node_time(j + 1), t_b);
      if (b <= a) continue;
      const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
      for (int g = 0; g < 4; ++g) {
        s_node += kW[g] * half * sub.lagrangian(mid + half * kX[g]);
      }
    }
    out.action += field.grid().weights[static_cast<size_t>(k)] * s_node;

    // Interior bands around each segment boundary are excluded: the force
    // table is not defined across a turning point.
    for (int s = 0; s < samples_per_node; ++s) {
      const double t = t_a + (t_b - t_a) * (s + 0.5) / samples_per_node;
      bool inside_band = false;
      for (int i = 0; i < n && !inside_band; ++i) {
        const auto& seg = sub.active_segment(i, t);
        if (seg.frozen()) continue;
        const double band = band_fraction * seg.duration();
        if (t < seg.t_begin() + band || t > seg.t_end() - band) inside_band = true;
      }
      if (inside_band) {
        ++out.samples_excluded;
        continue;
      }
      const PhaseState ps = traj.phase_state(t);
      const Vec dy = damped_rhs(field.system(), ps);
      Vec res = dy.tail(n) + field.system().stiffness() * ps.q;
      for (int i = 0; i < n; ++i) res(i) += sub.force_component(i, t, ps.q(i));
      out.el_residual = std::max(out.el_residual, res.cwiseAbs().maxCoeff());
      ++out.samples_used;
    }
  }
  return out;
}

/// Relative drift of K_hat over the field's time span.
inline double check_deltaK_conserved(const EnsembleField& field, int samples = 200) {
  if (samples < 2) throw ConfigurationError("deltaK check needs at least 2 samples");
  const double t0 = field.t_begin(), t1 = field.t_end();
  const double k0 = functional_K(field, t0);
  double drift = 0.0;
  for (int j = 0; j < samples; ++j) {
    const double t = t0 + (t1 - t0) * j / (samples - 1);
    drift = std::max(drift, std::abs(functional_K(field, t) - k0));
  }
  return drift / std::max(1.0, std::abs(k0));
}

}  // namespace dissipham

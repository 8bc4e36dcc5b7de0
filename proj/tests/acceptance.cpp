// Acceptance suite: runs every scenario-level criterion at its pinned
// tolerance and prints one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dissipham/dissipham.hpp"

using namespace dissipham;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  std::string id;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  double seconds = 0.0;
  std::string note;
};

std::vector<Criterion> g_results;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void record(const std::string& id, double residual, double tolerance, double seconds,
            const std::string& note = "", bool pass_override_ok = true) {
  Criterion c{id, residual, tolerance, residual <= tolerance && pass_override_ok, seconds, note};
  std::printf("[%s] %-28s residual %.3e  tol %.1e  (%.2fs)%s%s\n",
              c.pass ? "PASS" : "FAIL", c.id.c_str(), c.residual, c.tolerance, c.seconds,
              note.empty() ? "" : "  ", note.c_str());
  g_results.push_back(std::move(c));
}

DampedSystem oscillator(double c, double k) {
  Mat cm(1, 1), km(1, 1);
  cm << c;
  km << k;
  return DampedSystem(cm, km, true);
}

const InitialCondition kUnit{Eigen::Vector2d(1.0, 0.0)};

std::shared_ptr<const SubstitutingSystem> damped_pipeline(double t_end) {
  const DampedSystem sys = oscillator(0.2, 1.0);
  auto traj = std::make_shared<const Trajectory>(integrate_damped(sys, kUnit, t_end));
  return std::make_shared<const SubstitutingSystem>(sys, traj);
}

DomainSpec four_node_domain() {
  DomainSpec spec;
  spec.axes = {{0.5, 1.5, 2}, {-0.5, 0.5, 2}};
  return spec;
}

double interior_time(const EnsembleField& field, double t_from, double band_fraction) {
  const int n = field.system().dof();
  for (double t = t_from; t < field.t_end(); t += 0.01) {
    bool ok = true;
    for (int k = 0; k < field.node_count() && ok; ++k) {
      for (int i = 0; i < n && ok; ++i) {
        const auto& seg = field.substitution(k).active_segment(i, t);
        if (seg.frozen()) continue;
        const double band = band_fraction * seg.duration();
        if (t < seg.t_begin() + band || t > seg.t_end() - band) ok = false;
      }
    }
    if (ok) return t;
  }
  return t_from;
}

// --- criteria -------------------------------------------------------------

void criterion_hatH_constancy() {
  Timer timer;
  auto sub = damped_pipeline(60.0);
  double residual = 0.0;
  for (int j = 0; j <= 6000; ++j) {
    residual = std::max(residual, std::abs(sub->hamiltonian(60.0 * j / 6000) - 0.5));
  }
  const double elapsed = timer.seconds();
  record("1 hatH-constancy", residual, 1e-8, elapsed,
         elapsed < 1.0 ? "runtime < 1 s" : "RUNTIME BUDGET EXCEEDED", elapsed < 1.0);
}

void criterion_phase_coincidence() {
  Timer timer;
  const DampedSystem sys = oscillator(0.2, 1.0);
  auto sub = damped_pipeline(60.0);

  auto worst_at = [&](double h) {
    double worst = 0.0;
    const auto& segs = sub->segments(0);
    for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
      const CheckEntry e = check_phase_coincidence(sys, *sub, 0, s, h, 1e-6, "seg");
      worst = std::max(worst, e.residual);
    }
    return worst;
  };
  const double r_full = worst_at(1e-4);
  const double r_half = worst_at(5e-5);
  const double ratio = r_full / r_half;
  record("2a phase-coincidence", r_full, 1e-6, timer.seconds(), "h = 1e-4, all segments");
  record("2b halving-h-gain", 3.0 / ratio, 1.0, 0.0,
         "reduction x" + std::to_string(ratio).substr(0, 4) + " (need >= 3)");
}

void criterion_zero_damping_identity() {
  Timer timer;
  const DampedSystem sys = oscillator(0.0, 1.0);
  const double t_end = 20.0 * M_PI;
  auto traj = std::make_shared<const Trajectory>(integrate_damped(sys, kUnit, t_end));
  const SubstitutingSystem sub(sys, traj);

  double identity_residual = 0.0;
  for (const auto& seg : sub.segments(0)) {
    if (!seg.zero_force()) identity_residual = 1.0;  // G must vanish structurally
  }
  for (double t = 0.0; t <= t_end; t += 0.37) {
    identity_residual = std::max(identity_residual, std::abs(sub.work(t)));
    identity_residual = std::max(
        identity_residual,
        std::abs(sub.hamiltonian(t) - mechanical_energy(sys, traj->phase_state(t))));
  }

  const ConservativeForceField field = sub.force_field(sub.selector_at(0.0));
  double worst = 0.0;
  auto force = [&field](const Vec& q) -> Vec { return field.force(q); };
  verlet_scan(force, kUnit.q0(), kUnit.v0(), 0.0, t_end, 1e-5,
              [&](double t, const Vec& q, const Vec& p, const Vec&) {
                const Vec ref = traj->state(t);
                worst = std::max(worst, std::hypot(q(0) - ref(0), p(0) - ref(1)));
              });
  record("3 zero-damping-identity", std::max(identity_residual, worst), 1e-8, timer.seconds(),
         "G = 0, W = 0, re-integration at h = 1e-5");
}

void criterion_volume_dichotomy() {
  Timer timer;
  // Damped flows at t = 10 against the trace formula.
  double worst_rel = 0.0;
  {
    const VariationalFlow flow = integrate_variational(oscillator(0.2, 1.0), kUnit, 10.0);
    const double expected = std::exp(-0.2 * 10.0);
    worst_rel = std::abs(flow.jacobians.back().determinant() - expected) / expected;
  }
  {
    Mat c(2, 2), k = Mat::Identity(2, 2);
    c << 0.1, 0.0, 0.0, 0.3;
    const DampedSystem sys(c, k, true);
    const VariationalFlow flow =
        integrate_variational(sys, InitialCondition(Eigen::Vector4d(1, 0.5, 0, 0.4)), 10.0);
    const double expected = std::exp(-0.4 * 10.0);
    worst_rel = std::max(worst_rel,
                         std::abs(flow.jacobians.back().determinant() - expected) / expected);
  }
  record("4a damped-volume-rate", worst_rel, 1e-7, timer.seconds(), "tr C in {0.2, 0.4}, t = 10");

  Timer timer2;
  auto sub = damped_pipeline(10.0);
  const CheckEntry e = check_conservative_volume(*sub, 0, 0, 1e-4, 1e-6, "seg0");
  record("4b conservative-volume", e.residual, 1e-6, timer2.seconds(), "one segment, Verlet tangent");

  // Single-step tangent determinant.
  const ConservativeForceField field = sub->force_field(sub->selector_at(1.0));
  const Vec y = sub->curve().state(1.0);
  Vec q = y.head(1), p = y.tail(1);
  const double h = 1e-4;
  Vec ph = p + 0.5 * h * field.force(q);
  Vec q1 = q + h * ph;
  const Mat tangent = verlet_step_tangent(
      [&field](const Vec& qq) -> Mat { return field.force_jacobian(qq); }, q, h, q1);
  record("4c single-step-tangent", std::abs(tangent.determinant() - 1.0), 1e-14, 0.0);
}

void criterion_bracket_algebra() {
  Timer timer;
  const DampedSystem sys = oscillator(0.2, 1.0);
  const QuadratureGrid grid = build_grid(four_node_domain());
  const EnsembleField field = evolve_ensemble(sys, grid, 60.0);
  const FieldState snap = field.snapshot(interior_time(field, 5.0, 0.02));

  double canonical = 0.0;
  for (int k = 0; k < 4; ++k) {
    for (int m = 0; m < 4; ++m) {
      const double br = poisson_bracket(DiscreteFunctional::coordinate(k, 0),
                                        DiscreteFunctional::momentum(m, 0), snap, grid);
      const double want = k == m ? 1.0 / grid.weights[static_cast<size_t>(k)] : 0.0;
      canonical = std::max(canonical, std::abs(br - want));
    }
  }
  record("5a canonical-relations", canonical, 1e-9, timer.seconds(), "4-node grid");

  Timer timer2;
  std::mt19937 rng(20260810);
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  auto random_quadratic = [&]() {
    std::vector<double> a, b, c, d, e;
    for (int k = 0; k < 4; ++k) {
      a.push_back(coeff(rng));
      b.push_back(coeff(rng));
      c.push_back(coeff(rng));
      d.push_back(coeff(rng));
      e.push_back(coeff(rng));
    }
    return DiscreteFunctional(
        "quadratic",
        [a, b, c, d, e](const FieldState& st) {
          double acc = 0.0;
          for (size_t k = 0; k < st.q.size(); ++k) {
            const double q = st.q[k](0), pi = st.pi[k](0);
            acc += a[k] * q * q + b[k] * pi * pi + c[k] * q * pi + d[k] * q + e[k] * pi;
          }
          return acc / static_cast<double>(st.q.size());
        },
        true, true);
  };
  double antisym = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const DiscreteFunctional f = random_quadratic();
    const DiscreteFunctional g = random_quadratic();
    antisym = std::max(antisym, std::abs(poisson_bracket(f, g, snap, grid) +
                                         poisson_bracket(g, f, snap, grid)));
  }
  record("5b antisymmetry", antisym, 1e-12, timer2.seconds(), "100 random quadratic pairs");

  const DiscreteFunctional khat = energy_functional(field, snap.t);
  record("5c K-with-itself", std::abs(poisson_bracket(khat, khat, snap, grid)), 1e-12, 0.0);
}

void criterion_hamilton_equations() {
  Timer timer;
  const DampedSystem sys = oscillator(0.2, 1.0);
  const EnsembleField field = evolve_ensemble(sys, build_grid(four_node_domain()), 60.0);
  double worst = 0.0;
  for (double t0 : {3.0, 14.0, 27.0, 41.0, 55.0}) {
    const double t = interior_time(field, t0, 0.02);
    const HamiltonResidual r = hamilton_residual(field, t);
    worst = std::max({worst, r.pi_residual, r.q_residual});
  }
  record("6 hamilton-equations", worst, 1e-5, timer.seconds(), "4-node grid, 5 interior times");
}

void criterion_deltaK_conservation() {
  Timer timer;
  const DampedSystem sys = oscillator(0.2, 1.0);
  const EnsembleField field = evolve_ensemble(sys, build_grid(four_node_domain()), 60.0);
  record("7 deltaK-conservation", check_deltaK_conserved(field, 400), 1e-8, timer.seconds(),
         "relative drift over [0, 60]");
}

void criterion_euler_lagrange() {
  Timer timer;
  const DampedSystem sys = oscillator(0.2, 1.0);
  const EnsembleField field = evolve_ensemble(sys, build_grid(four_node_domain()), 60.0);
  const ActionResult r = action_and_el_residual(field, 0.0, 60.0);
  record("8a euler-lagrange", r.el_residual, 1e-6, timer.seconds(), "inside segments");

  Timer timer2;
  const DampedSystem undamped = oscillator(0.0, 1.0);
  DomainSpec unit;
  unit.axes = {{0.5, 1.5, 1}, {-0.5, 0.5, 1}};  // single node (1, 0), weight 1
  const EnsembleField single = evolve_ensemble(undamped, build_grid(unit), 2.0 * M_PI);
  const ActionResult a = action_and_el_residual(single, 0.0, 2.0 * M_PI);
  record("8b period-action", std::abs(a.action), 1e-6, timer2.seconds(),
         "one full period, a = (1, 0)");
}

void criterion_energy_balance(const fs::path& scenario_dir) {
  Timer timer;
  double worst = 0.0;
  std::string covered;
  for (const char* name : {"undamped", "damped1dof", "damped2dof"}) {
    const ScenarioConfig cfg = load_scenario((scenario_dir / (std::string(name) + ".cfg")).string());
    const DampedSystem sys = cfg.system();
    auto traj = std::make_shared<const Trajectory>(
        integrate_damped(sys, cfg.initial, cfg.t_end, cfg.integrator));
    const SubstitutingSystem sub(sys, traj, cfg.segmentation);
    const CheckEntry e = check_energy_balance(sys, sub, 1e-9, cfg.name);
    worst = std::max(worst, e.residual);
    covered += covered.empty() ? cfg.name : " " + cfg.name;
  }
  record("9 energy-balance", worst, 1e-9, timer.seconds(), covered);
}

void criterion_determinism(const std::string& cli, const fs::path& scenario_dir) {
  Timer timer;
  const fs::path base = fs::temp_directory_path() / "dissipham_acceptance";
  fs::remove_all(base);
  const fs::path out1 = base / "run1", out2 = base / "run2";

  auto run = [&](const fs::path& out) {
    std::ostringstream cmd;
    cmd << cli << " verify --config " << (scenario_dir / "damped1dof.cfg") << " --out " << out
        << " > /dev/null 2>&1";
    return std::system(cmd.str().c_str());
  };
  const int s1 = run(out1);
  const int s2 = run(out2);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool identical = s1 == 0 && s2 == 0;
  for (const char* f : {"damped1dof_report.json", "damped1dof_report.txt"}) {
    const std::string a = slurp(out1 / f), b = slurp(out2 / f);
    identical = identical && !a.empty() && a == b;
  }
  record("10 determinism", identical ? 0.0 : 1.0, 0.5, timer.seconds(),
         identical ? "byte-identical reports, exit 0" : "reports differ or exit nonzero");
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli = "./tools/dissipham";
  std::string scenarios = "scenarios";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") cli = argv[i + 1];
    if (flag == "--scenarios") scenarios = argv[i + 1];
  }

  Timer total;
  criterion_hatH_constancy();
  criterion_phase_coincidence();
  criterion_zero_damping_identity();
  criterion_volume_dichotomy();
  criterion_bracket_algebra();
  criterion_hamilton_equations();
  criterion_deltaK_conservation();
  criterion_euler_lagrange();
  criterion_energy_balance(scenarios);
  criterion_determinism(cli, scenarios);

  int failures = 0;
  for (const auto& c : g_results) {
    if (!c.pass) ++failures;
  }
  std::printf("%d/%zu criteria passed in %.1fs\n", static_cast<int>(g_results.size()) - failures,
              g_results.size(), total.seconds());
  return failures;
}

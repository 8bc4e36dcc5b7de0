#include <catch2/catch_amalgamated.hpp>

#include "dissipham/integrate.hpp"
#include "dissipham/model.hpp"

using namespace dissipham;

namespace {

DampedSystem oscillator(double c, double k) {
  Mat cm(1, 1), km(1, 1);
  cm << c;
  km << k;
  return DampedSystem(cm, km, true);
}

PhaseState state1(double q, double p, double t = 0.0) {
  Vec qv(1), pv(1);
  qv << q;
  pv << p;
  return PhaseState{qv, pv, t};
}

}  // namespace

TEST_CASE("damped rhs") {
  SECTION("undamped spring at turning point") {
    const Vec dy = damped_rhs(oscillator(0.0, 1.0), state1(1.0, 0.0));
    CHECK(dy(0) == 0.0);
    CHECK(dy(1) == -1.0);
  }
  SECTION("direct substitution") {
    const Vec dy = damped_rhs(oscillator(0.2, 1.0), state1(0.0, 1.0));
    CHECK(dy(0) == 1.0);
    CHECK(dy(1) == Catch::Approx(-0.2).margin(1e-15));
  }
  SECTION("zero velocity kills the damping term") {
    Mat c(2, 2), k(2, 2);
    c << 0.1, 0.0, 0.0, 0.3;
    k = Mat::Identity(2, 2);
    const DampedSystem sys(c, k, true);
    Vec q(2), p(2);
    q << 1.0, 2.0;
    p << 0.0, 0.0;
    const Vec dy = damped_rhs(sys, PhaseState{q, p, 0.0});
    CHECK(dy(0) == 0.0);
    CHECK(dy(1) == 0.0);
    CHECK(dy(2) == -1.0);
    CHECK(dy(3) == -2.0);
  }
  SECTION("dimension mismatch is rejected") {
    Vec q(2), p(2);
    q.setZero();
    p.setZero();
    CHECK_THROWS_AS(damped_rhs(oscillator(0.0, 1.0), PhaseState{q, p, 0.0}),
                    ConfigurationError);
  }
}

TEST_CASE("mechanical energy") {
  CHECK(mechanical_energy(oscillator(0.0, 1.0), state1(0.0, 0.0)) == 0.0);
  CHECK(mechanical_energy(oscillator(0.0, 1.0), state1(1.0, 0.0)) == 0.5);

  Mat c = Mat::Zero(2, 2), k = Mat::Identity(2, 2);
  const DampedSystem sys(c, k, true);
  Vec q(2), p(2);
  q << 1.0, 1.0;
  p << 1.0, 0.0;
  CHECK(mechanical_energy(sys, PhaseState{q, p, 0.0}) == 1.5);
}

TEST_CASE("dissipated power") {
  CHECK(dissipated_power(oscillator(0.0, 1.0), state1(0.3, -2.0)) == 0.0);
  CHECK(dissipated_power(oscillator(0.2, 1.0), state1(0.0, 2.0)) ==
        Catch::Approx(0.8).epsilon(1e-15));

  Mat c(2, 2), k = Mat::Identity(2, 2);
  c << 0.1, 0.0, 0.0, 0.3;
  const DampedSystem sys(c, k, true);
  Vec q = Vec::Zero(2), p(2);
  p << 1.0, 1.0;
  CHECK(dissipated_power(sys, PhaseState{q, p, 0.0}) == Catch::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("energy balance along the flow") {
  const DampedSystem sys = oscillator(0.2, 1.0);
  const InitialCondition a(Eigen::Vector2d(1.0, 0.0));
  const Trajectory traj = integrate_damped(sys, a, 10.0);

  // dH/dt = -dissipated power, by central differences on the dense output.
  const double fd = 1e-6;
  for (double t : {0.5, 2.0, 5.0, 8.5}) {
    const double dh = (mechanical_energy(sys, traj.phase_state(t + fd)) -
                       mechanical_energy(sys, traj.phase_state(t - fd))) /
                      (2 * fd);
    const double power = dissipated_power(sys, traj.phase_state(t));
    CHECK(std::abs(dh + power) < 10.0 * 1e-9);
  }

  // H is non-increasing for positive semi-definite damping.
  double prev = mechanical_energy(sys, traj.phase_state(0.0));
  for (int j = 1; j <= 100; ++j) {
    const double h = mechanical_energy(sys, traj.phase_state(0.1 * j));
    CHECK(h <= prev + 1e-12);
    prev = h;
  }
}

TEST_CASE("system validation") {
  Mat c = Mat::Zero(2, 2);
  Mat k(2, 2);
  k << 1.0, 0.3, 0.2, 1.0;  // not symmetric
  CHECK_THROWS_AS(DampedSystem(c, k, true), ConfigurationError);
  CHECK_NOTHROW(DampedSystem(c, k, false));

  Mat neg(2, 2);
  neg << -1.0, 0.0, 0.0, 1.0;  // indefinite
  CHECK_THROWS_AS(DampedSystem(c, neg, true), ConfigurationError);
  CHECK_NOTHROW(DampedSystem(c, neg, false));

  Mat bad(2, 1);
  bad.setZero();
  CHECK_THROWS_AS(DampedSystem(bad, bad, false), ConfigurationError);

  CHECK(oscillator(0.0, 4.0).min_period() == Catch::Approx(M_PI).epsilon(1e-14));
}

TEST_CASE("initial condition packing") {
  const InitialCondition a(Eigen::Vector4d(1.0, 2.0, 3.0, 4.0));
  CHECK(a.dof() == 2);
  CHECK(a.q0()(1) == 2.0);
  CHECK(a.v0()(0) == 3.0);
  CHECK_THROWS_AS(InitialCondition(Vec::Ones(3)), ConfigurationError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "bloch/trajectory.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bloch;

namespace {

PeriodicPotential zero_potential() { return make_periodic_potential(Lattice(1.0), {}); }

PeriodicPotential cosine_potential() {
  return make_periodic_potential(Lattice(1.0), {{1, 0.5}, {-1, 0.5}});
}

PeriodicPotential asymmetric_potential() {
  return make_periodic_potential(
      Lattice(1.0), {{1, 0.5}, {-1, 0.5}, {2, cx(0, -0.15)}, {-2, cx(0, 0.15)}});
}

ExternalPotential harmonic() {
  return ExternalPotential(ExternalPotential::Kind::quadratic, {0.0, 0.0, 0.5});
}

// composite simpson, oracle-grade
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("right-hand sides") {
  SUBCASE("free particle in a harmonic trap") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.1);
    TrajectoryState s;
    s.Q = 1.0;
    s.P = 0.0;
    TrajectoryDeriv d = m.rhs(s, CorrectionOrder::order0);
    CHECK(std::abs(d.dQ) <= 1e-10);
    CHECK(d.dP == doctest::Approx(-1.0).epsilon(1e-12));
    // jet equation reduces to the riccati form
    CHECK(d.daux.p2 == doctest::Approx(-1.0).epsilon(1e-10));
  }

  SUBCASE("linear potential: momentum equation identical across orders 0/1") {
    BandTable band(asymmetric_potential(), 1, 256, 24);
    PerturbTable pt(band);
    ExternalPotential U(ExternalPotential::Kind::linear, {0.0, 0.7});
    TrajectoryModel m(pt, U, 0.125);
    TrajectoryState s;
    s.Q = 0.4;
    s.P = 0.9;
    TrajectoryDeriv d0 = m.rhs(s, CorrectionOrder::order0);
    TrajectoryDeriv d1 = m.rhs(s, CorrectionOrder::order1);
    CHECK(d0.dP == -0.7);
    CHECK(d1.dP == d0.dP);  // the connection term carries ddU = 0
    CHECK(d1.dQ != d0.dQ);  // the velocity picks up the first-order term
  }
}

TEST_CASE("integration") {
  SUBCASE("harmonic oscillator half period") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.1);
    TrajectoryState s;
    s.Q = 1.0;
    s.P = 0.0;
    Trajectory tr = integrate(m, s, CorrectionOrder::order0, 1e-3, kPi);
    CHECK(std::abs(tr.back().Q + 1.0) <= 1e-8);
    CHECK(std::abs(tr.back().P) <= 1e-8);
  }

  SUBCASE("riccati jet: P2(t) = -tan t") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.1);
    TrajectoryState s;
    s.Q = 0.0;
    s.P = 0.3;  // band interior; dE2 = 1 along the whole flow
    Trajectory tr = integrate(m, s, CorrectionOrder::order0, 1e-3, 0.5);
    CHECK(std::abs(tr.back().aux.p2 + std::tan(0.5)) <= 1e-8);
  }

  SUBCASE("log-amplitude slope: L1(t) = 1/cos t") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.1);
    TrajectoryState s;
    s.Q = 0.0;
    s.P = 0.3;
    s.aux.l1 = 1.0;
    Trajectory tr = integrate(m, s, CorrectionOrder::order0, 1e-3, 0.5);
    CHECK(std::abs(tr.back().aux.l1 - 1.0 / std::cos(0.5)) <= 1e-7);
  }

  SUBCASE("solver self-convergence at fourth order") {
    BandTable band(asymmetric_potential(), 1, 256, 24);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.125);
    TrajectoryState s;
    s.Q = 1.0;
    s.P = 0.4;
    s.aux.l2 = -1.0;
    auto final_q = [&](double dt) {
      return integrate(m, s, CorrectionOrder::order1, dt, 2.0).back().Q;
    };
    double ref = final_q(1.25e-3);
    double e1 = std::abs(final_q(2e-2) - ref);
    double e2 = std::abs(final_q(1e-2) - ref);
    CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.2));
  }

  SUBCASE("unperturbed energy is conserved") {
    BandTable band(cosine_potential(), 1, 256, 16);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.1);
    TrajectoryState s;
    s.Q = 1.2;
    s.P = 0.0;
    Trajectory tr = integrate(m, s, CorrectionOrder::order0, 1e-3, 5.0);
    double H0 = m.modified_hamiltonian(tr.states.front(), CorrectionOrder::order0);
    for (size_t i = 0; i < tr.states.size(); i += 100) {
      double H = m.modified_hamiltonian(tr.states[i], CorrectionOrder::order0);
      CHECK(std::abs(H - H0) <= 1e-8);
    }
  }

  SUBCASE("caustic guard aborts with the last valid time") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    ExternalPotential U(ExternalPotential::Kind::linear, {0.0, 0.0});
    TrajectoryModel m(pt, U, 0.1);
    TrajectoryState s;
    s.P = 0.3;
    s.aux.p2 = -1.0;  // dP2/dt = -P2^2 blows up at t = 1
    Trajectory tr0 = integrate(m, s, CorrectionOrder::order0, 1e-3, 1.2);
    CHECK_FALSE(tr0.aborted);
    CHECK(tr0.aux_frozen);
    CHECK(tr0.aux_valid_time > 0.9);
    CHECK(tr0.aux_valid_time < 1.05);
    CHECK(tr0.back().t == doctest::Approx(1.2));
    Trajectory tr2 = integrate(m, s, CorrectionOrder::order2, 1e-3, 1.2);
    CHECK(tr2.aborted);
    CHECK(tr2.last_valid_time > 0.9);
    CHECK(tr2.last_valid_time < 1.05);
  }

  SUBCASE("step halving error estimate is reported") {
    BandTable band(cosine_potential(), 1, 128, 16);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.1);
    TrajectoryState s;
    s.Q = 0.7;
    Trajectory tr = integrate(m, s, CorrectionOrder::order0, 1e-2, 1.0, true);
    CHECK(tr.step_error > 0.0);
    CHECK(tr.step_error < 1e-8);
  }
}

TEST_CASE("jet transport against trajectory fans") {
  BandTable band(asymmetric_potential(), 1, 512, 32);
  PerturbTable pt(band);
  ExternalPotential U = harmonic();
  TrajectoryModel m(pt, U, 0.1);
  const double x0 = 0.3, K0 = 0.5, T = 0.5, dt = 2e-4;

  // initial fields: phase with curvature, gaussian-like log amplitude
  auto S0p = [&](double x) { return K0 + 0.1 * std::sin(x); };   // dS0/dx
  auto S0pp = [&](double x) { return 0.1 * std::cos(x); };
  auto S0ppp = [&](double x) { return -0.1 * std::sin(x); };
  auto S0pppp = [&](double x) { return -0.1 * std::cos(x); };
  auto L0f = [&](double x) { return -0.5 * (x - 0.1) * (x - 0.1); };
  auto L1f = [&](double x) { return -(x - 0.1); };

  auto run = [&](double x) {
    TrajectoryState s;
    s.Q = x;
    s.P = S0p(x);
    s.aux.p2 = S0pp(x);
    s.aux.p3 = S0ppp(x);
    s.aux.p4 = S0pppp(x);
    s.aux.p5 = 0.1 * std::sin(x);
    s.aux.l0 = L0f(x);
    s.aux.l1 = L1f(x);
    s.aux.l2 = -1.0;
    return integrate(m, s, CorrectionOrder::order0, dt, T).back();
  };

  TrajectoryState c = run(x0);

  SUBCASE("phase hessian matches the dP/dQ fan at second order in width") {
    auto fan_err = [&](double h) {
      TrajectoryState a = run(x0 - h), b = run(x0 + h);
      double fan = (b.P - a.P) / (b.Q - a.Q);
      return std::abs(fan - c.aux.p2);
    };
    double e1 = fan_err(2e-2), e2 = fan_err(1e-2);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.4));
    CHECK(e2 <= 1e-4);
  }

  SUBCASE("third jet from a five-point fan") {
    auto fan_p3 = [&](double h) {
      TrajectoryState m2 = run(x0 - 2 * h), m1 = run(x0 - h), p1 = run(x0 + h),
                      p2 = run(x0 + 2 * h);
      double left = (c.P - m2.P) / (c.Q - m2.Q);
      double right = (p2.P - c.P) / (p2.Q - c.Q);
      return (right - left) / (p1.Q - m1.Q);
    };
    double e1 = std::abs(fan_p3(4e-2) - c.aux.p3);
    double e2 = std::abs(fan_p3(2e-2) - c.aux.p3);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.6));
    CHECK(e2 <= 5e-3);
  }

  SUBCASE("log-amplitude slope from the transported mass fan") {
    auto fan_l1 = [&](double h) {
      TrajectoryState a = run(x0 - h), b = run(x0 + h);
      double fan = (b.aux.l0 - a.aux.l0) / (b.Q - a.Q);
      return std::abs(fan - c.aux.l1);
    };
    double e1 = fan_l1(2e-2), e2 = fan_l1(1e-2);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.4));
    CHECK(e2 <= 1e-4);
  }

  SUBCASE("forcing term against the trajectory-fan gradient of the energy") {
    const double eps_h = 5e-3;
    // hold p fixed at the central momentum so the fan isolates the
    // x-dependence of the energy correction
    auto e2_of = [&](const TrajectoryState& s) {
      return dynamic_second_order(pt, c.P, s.aux, U.derivative(s.Q, 1),
                                  U.derivative(s.Q, 2));
    };
    auto fan = [&](double h) {
      TrajectoryState a = run(x0 - h), b = run(x0 + h);
      return (e2_of(b) - e2_of(a)) / (b.Q - a.Q);
    };
    double rich = (4.0 * fan(eps_h) - fan(2 * eps_h)) / 3.0;
    double f = forcing_term(pt, c.P, c.aux, U.derivative(c.Q, 1),
                            U.derivative(c.Q, 2), U.derivative(c.Q, 3));
    CHECK(std::abs(f - rich) <= 1e-6 * std::max(1.0, std::abs(f)));
  }
}

TEST_CASE("physical center and modified hamiltonian") {
  SUBCASE("free band centers coincide with the canonical position") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.2);
    TrajectoryState s;
    s.Q = 1.0;
    s.P = 0.3;
    for (auto ord : {CorrectionOrder::order0, CorrectionOrder::order1,
                     CorrectionOrder::order2})
      CHECK(std::abs(m.physical_center(s, ord) - 1.0) <= 1e-10);
    CHECK(m.modified_hamiltonian(s, CorrectionOrder::order0) ==
          doctest::Approx(0.045 + 0.5).epsilon(1e-12));
    ExternalPotential flat(ExternalPotential::Kind::linear, {0.0, 0.0});
    TrajectoryModel mf(pt, flat, 0.2);
    CHECK(mf.modified_hamiltonian(s, CorrectionOrder::order2) ==
          doctest::Approx(0.045).epsilon(1e-12));
  }

  SUBCASE("position shift accumulates the connection terms") {
    BandTable band(asymmetric_potential(), 1, 256, 24);
    PerturbTable pt(band);
    TrajectoryModel m(pt, harmonic(), 0.1);
    TrajectoryState s;
    s.Q = 1.0;
    s.P = 0.4;
    double x1 = m.physical_center(s, CorrectionOrder::order1);
    CHECK(x1 == doctest::Approx(1.0 + 0.1 * band.berry(0.4)).epsilon(1e-14));
    double x2 = m.physical_center(s, CorrectionOrder::order2);
    CHECK(x2 == doctest::Approx(x1 + 0.01 * harmonic().derivative(1.0, 1) *
                                         pt.a1(0.4))
                    .epsilon(1e-12));
  }
}

TEST_CASE("plane-wave family closed forms") {
  SUBCASE("momentum is exactly linear in time") {
    BandTable band(cosine_potential(), 1, 128, 16);
    PerturbTable pt(band);
    SpecialCaseSolution sol(pt, 1.0, 0.0, 1.0, 0.0, 0.5);
    CHECK(sol.b1(2.0) == 0.0);
    CHECK(sol.b1(0.0) == 1.0);
  }

  SUBCASE("free-band phase integral") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    SpecialCaseSolution sol(pt, 1.0, 0.0, 1.0, 0.0, 1.0);
    CHECK(sol.b0(1.0) == doctest::Approx(-1.0 / 6.0).epsilon(1e-11));
    CHECK(std::abs(sol.S1(1.0)) <= 1e-11);
    CHECK(std::abs(sol.S2(1.0)) <= 1e-11);
  }

  SUBCASE("adaptive quadrature against a dense simpson oracle") {
    BandTable band(cosine_potential(), 1, 256, 16);
    PerturbTable pt(band);
    SpecialCaseSolution sol(pt, 0.5, 0.3, 1.0, 0.2, 1.0);
    const double t = 2.7;
    double oracle =
        0.3 - simpson([&](double s) { return band.energy(sol.b1(s)); }, 0.0, t, 20000) -
        0.2 * t;
    CHECK(std::abs(sol.b0(t) - oracle) <= 1e-11);
    double s1_oracle =
        -simpson([&](double s) { return band.berry(sol.b1(s)) * 1.0; }, 0.0, t, 20000);
    CHECK(std::abs(sol.S1(t) - s1_oracle) <= 1e-11);
  }
}

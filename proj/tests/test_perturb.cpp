#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "bloch/perturb.hpp"
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

AuxState random_aux(std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  AuxState a;
  a.p2 = d(rng);
  a.p3 = d(rng);
  a.p4 = d(rng);
  a.p5 = d(rng);
  a.l0 = d(rng);
  a.l1 = d(rng);
  a.l2 = d(rng);
  a.l3 = d(rng);
  return a;
}

}  // namespace

TEST_CASE("sternheimer solve") {
  PeriodicPotential V = cosine_potential();
  const int M = 16, n = 1;
  const double p = 0.37;
  MatC H = assemble_hamiltonian(V, p, M);
  BlochState s = solve_band(H, n, p, V.lattice().reciprocal());

  SUBCASE("projection annihilates the state itself") {
    VecC w = sternheimer_solve(H, s, s.coeffs);
    CHECK(w.norm() <= 1e-12);
  }

  SUBCASE("eigenvector forcing is divided by its gap") {
    oracles::FullSpectrum fs = oracles::full_spectrum(V, p, M);
    VecC chi3 = fs.chi.col(2);
    VecC w = sternheimer_solve(H, s, chi3);
    VecC expect = chi3 / (fs.E(2) - fs.E(0));
    CHECK((w - expect).norm() <= 1e-11 * expect.norm());
  }

  SUBCASE("random forcing matches the spectral sum") {
    std::mt19937 rng(42);
    std::normal_distribution<double> g;
    oracles::FullSpectrum fs = oracles::full_spectrum(V, p, M);
    for (int trial = 0; trial < 5; ++trial) {
      VecC r(2 * M + 1);
      for (int i = 0; i <= 2 * M; ++i) r(i) = cx(g(rng), g(rng));
      VecC w = sternheimer_solve(H, s, r);
      CHECK(std::abs(s.coeffs.dot(w)) <= 1e-12);
      VecC rp = r - s.coeffs * s.coeffs.dot(r);
      CHECK((H * w - s.energy * w - rp).norm() <= 1e-10 * rp.norm());
      VecC ws = oracles::sum_over_states_w(fs, n, r);
      CHECK((w - ws).norm() <= 1e-9 * std::max(1.0, ws.norm()));
    }
  }

  SUBCASE("near-degenerate states are rejected") {
    BlochState s2 = solve_band(zero_potential(), 0.0, 8, 2);
    MatC H2 = assemble_hamiltonian(zero_potential(), 0.0, 8);
    VecC r = VecC::Ones(17);
    CHECK_THROWS_AS(sternheimer_solve(H2, s2, r), NearDegeneracyError);
  }
}

TEST_CASE("first order correction") {
  SUBCASE("free band has no first-order response") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    FirstOrderResult r = first_order(pt, 0.3, 2.0);
    CHECK(std::abs(r.E1) <= 1e-13);
    CHECK(r.w.norm() <= 1e-12);
  }

  SUBCASE("energy shift is the connection times the slope") {
    BandTable band(asymmetric_potential(), 1, 256, 24);
    PerturbTable pt(band);
    double p = 0.61, U1 = 3.0;
    FirstOrderResult r = first_order(pt, p, U1);
    CHECK(r.E1 == band.berry(p) * U1);
    // and shifts under a gauge twist exactly like the connection
    BandTable tw = band.twisted([](double q) { return 0.2 * std::sin(q); });
    PerturbTable ptw(tw);
    double shift = first_order(ptw, p, U1).E1 - r.E1;
    CHECK(std::abs(shift + 0.2 * std::cos(p) * U1) <= 1e-7);
  }

  SUBCASE("finite-difference quotient of the gauged family reproduces E1") {
    BandTable band(asymmetric_potential(), 1, 512, 24);
    PerturbTable pt(band);
    const double U1 = 1.0;
    for (double p : {0.17, -0.9, 2.4}) {
      VecC chi = band.chi_at(p);
      auto fdE1 = [&](double d) {
        VecC diff = (band.chi_at(p + d) - band.chi_at(p - d)) / (2.0 * d);
        return (kImag * U1 * chi.dot(diff)).real();
      };
      double rich = (4.0 * fdE1(5e-4) - fdE1(1e-3)) / 3.0;
      CHECK(std::abs(first_order(pt, p, U1).E1 - rich) <= 1e-7);
    }
  }
}

TEST_CASE("static second order") {
  SUBCASE("free band vanishes") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    StaticSecondResult r = static_second_order(pt, 0.4, 1.3, 0.7);
    CHECK(std::abs(r.Es2) <= 1e-12);
    CHECK(std::abs(r.A1) <= 1e-12);
    CHECK(std::abs(r.B) <= 1e-12);
  }

  SUBCASE("linear potential reduces to the slope response") {
    BandTable band(cosine_potential(), 1, 256, 16);
    PerturbTable pt(band);
    StaticSecondResult r = static_second_order(pt, 0.8, 0.5, 0.0);
    CHECK(r.Es2 == r.A1 * 0.5);
  }

  SUBCASE("sum over states oracle at M=16") {
    PeriodicPotential V = cosine_potential();
    BandTable band(V, 1, 512, 16);
    PerturbTable pt(band);
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> dp(-kPi, kPi), dx(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
      double p = dp(rng), x = dx(rng);
      double U1 = 1.0 + 0.3 * x, U2 = 0.9;
      StaticSecondResult r = static_second_order(pt, p, U1, U2);
      double sos = oracles::sum_over_states_es2(V, p, 16, 1, band.berry(p), U1, U2);
      CHECK(std::abs(r.Es2 - sos) <= 1e-8 * std::max(1.0, std::abs(sos)));

      FirstOrderResult fo = first_order(pt, p, U1);
      oracles::FullSpectrum fs = oracles::full_spectrum(V, p, 16);
      VecC chi = band.chi_at(p);
      VecC y1 = band.dpchi_at(p);
      VecC rhs = -kImag * U1 * (y1 - chi * chi.dot(y1));
      VecC ws = oracles::sum_over_states_w(fs, 1, rhs);
      CHECK((fo.w - ws).norm() <= 1e-8 * std::max(1.0, ws.norm()));
    }
  }

  SUBCASE("decomposition identity at random points") {
    BandTable band(asymmetric_potential(), 1, 512, 32);
    PerturbTable pt(band);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dp(-8.0, 8.0), dx(-3.0, 3.0);
    ExternalPotential U(ExternalPotential::Kind::quadratic, {0.1, -0.4, 0.5});
    for (int trial = 0; trial < 100; ++trial) {
      double p = dp(rng), x = dx(rng);
      double U1 = U.derivative(x, 1), U2 = U.derivative(x, 2);
      StaticSecondResult r = static_second_order(pt, p, U1, U2);
      CHECK(std::abs(r.Es2 - (r.A1 * U1 + r.B * U2)) <= 1e-10);
    }
  }
}

TEST_CASE("dynamic second order") {
  SUBCASE("free band with constant amplitude vanishes") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    AuxState a;
    a.p2 = 0.7;
    a.p3 = -0.2;
    CHECK(std::abs(dynamic_second_order(pt, 0.3, a, 0.0, 0.0)) <= 1e-12);
  }

  SUBCASE("free band with a gaussian amplitude keeps the laplacian term") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    AuxState a;
    a.l2 = -1.0;
    CHECK(dynamic_second_order(pt, 0.3, a, 0.0, 0.0) ==
          doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("agrees with the direct assembly on random jets") {
    BandTable band(asymmetric_potential(), 1, 512, 32);
    PerturbTable pt(band);
    ExternalPotential U(ExternalPotential::Kind::quadratic, {0.0, 0.0, 0.5});
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> dp(-4.0, 4.0), dx(-2.0, 2.0);
    for (int trial = 0; trial < 25; ++trial) {
      double p = dp(rng), x = dx(rng);
      AuxState a = random_aux(rng, 1.0);
      double U1 = U.derivative(x, 1), U2 = U.derivative(x, 2);
      double prod = dynamic_second_order(pt, p, a, U1, U2);
      double orac = oracles::e2_direct_oracle(pt, p, a, U1, U2);
      CHECK(std::abs(prod - orac) <= 1e-9 * std::max(1.0, std::abs(orac)));
    }
  }
}

TEST_CASE("wave packet energy") {
  SUBCASE("definitional identity") {
    BandTable band(cosine_potential(), 1, 256, 16);
    PerturbTable pt(band);
    std::mt19937 rng(5);
    AuxState a = random_aux(rng, 0.8);
    double p = 0.9, U1 = 0.7, U2 = 0.3;
    double ew = wavepacket_energy(pt, p, a, U1, U2);
    double e2 = dynamic_second_order(pt, p, a, U1, U2);
    double es2 = static_second_order(pt, p, U1, U2).Es2;
    CHECK(std::abs(ew - (e2 - es2)) <= 1e-10);
  }

  SUBCASE("plane-wave family with a linear potential carries none") {
    BandTable band(cosine_potential(), 1, 256, 16);
    PerturbTable pt(band);
    AuxState a;
    CHECK(std::abs(wavepacket_energy(pt, 0.31, a, 0.8, 0.0)) <= 1e-12);
  }

  SUBCASE("free gaussian amplitude is pure packet energy") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    AuxState a;
    a.l2 = -1.0;
    CHECK(wavepacket_energy(pt, 0.3, a, 0.0, 0.0) ==
          doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("forcing term") {
  SUBCASE("free band, constant amplitude, linear potential") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    AuxState a;
    CHECK(std::abs(forcing_term(pt, 0.3, a, 1.0, 0.0, 0.0)) <= 1e-13);
  }

  SUBCASE("free band with a moving gaussian amplitude") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    ExternalPotential U(ExternalPotential::Kind::linear, {0.0, 0.0});
    for (double x : {0.0, 0.4, 1.3}) {
      AuxState a;
      a.l1 = -x;
      a.l2 = -1.0;
      double f = forcing_term(pt, 0.3, a, 0.0, 0.0, 0.0);
      double fd = oracles::forcing_fd_oracle(pt, 0.3, a, U, x, 1e-3);
      CHECK(std::abs(f - fd) <= 1e-7);
      CHECK(f == doctest::Approx(-x).epsilon(1e-10));
    }
  }

  SUBCASE("matches the x-difference of the energy on random states") {
    BandTable band(asymmetric_potential(), 1, 512, 32);
    PerturbTable pt(band);
    ExternalPotential U(ExternalPotential::Kind::polynomial, {0.0, 0.2, 0.25, 0.1});
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> dp(-4.0, 4.0), dx(-1.5, 1.5);
    for (int trial = 0; trial < 50; ++trial) {
      double p = dp(rng), x = dx(rng);
      AuxState a = random_aux(rng, 1.0);
      double f = forcing_term(pt, p, a, U.derivative(x, 1), U.derivative(x, 2),
                              U.derivative(x, 3));
      double fd = oracles::forcing_fd_oracle(pt, p, a, U, x, 2e-3);
      CHECK(std::abs(f - fd) <= 1e-7 * std::max(1.0, std::abs(f)));
    }
  }

  SUBCASE("term report: the two routes differ only in the known terms") {
    BandTable band(asymmetric_potential(), 1, 256, 24);
    PerturbTable pt(band);
    std::mt19937 rng(3);
    AuxState a = random_aux(rng, 1.0);
    ForcingReport rep = forcing_term_report(pt, 0.8, a, 0.9, 0.5, 0.2);
    for (const ForcingTermPair& t : rep.terms) {
      if (t.name == "amplitude" || t.name == "trace_curvature" ||
          t.name == "fourth_jet") {
        continue;  // documented discrepancies of the closed-form route
      }
      CHECK(t.gradient_route == doctest::Approx(t.closed_form).epsilon(1e-12));
    }
    CHECK(rep.gradient_total ==
          doctest::Approx(forcing_term(pt, 0.8, a, 0.9, 0.5, 0.2)).epsilon(1e-12));
  }
}

TEST_CASE("identity chain residuals") {
  SUBCASE("free band sits at machine floor") {
    BandTable band(zero_potential(), 1, 64, 8);
    PerturbTable pt(band);
    for (const auto& [name, res] : verify_identities(pt)) {
      CAPTURE(name);
      CHECK(res <= 1e-12);
    }
  }

  SUBCASE("asymmetric potential at the reference resolution") {
    BandTable b1(asymmetric_potential(), 1, 256, 32);
    PerturbTable p1(b1);
    std::map<std::string, double> r1 = verify_identities(p1);
    for (const auto& [name, res] : r1) {
      CAPTURE(name);
      CHECK(res <= 1e-7);
    }
    BandTable b2(asymmetric_potential(), 1, 512, 64);
    PerturbTable p2(b2);
    std::map<std::string, double> r2 = verify_identities(p2);
    for (const auto& [name, res] : r2) {
      CAPTURE(name);
      CHECK(res <= std::max(r1[name] / 10.0, 2e-12));
    }
  }

  SUBCASE("projection identities hold by construction") {
    BandTable band(cosine_potential(), 1, 128, 16);
    PerturbTable pt(band);
    IdentityParams ip;
    ip.L1 = 0.7;
    ip.A0amp = 1.0;
    std::map<std::string, double> r = verify_identities(pt, ip);
    CHECK(r.at("amplitude_projection") <= 1e-10);
    CHECK(r.at("connection_projection") <= 1e-10);
  }
}

TEST_CASE("differentiated response cross-check") {
  BandTable band(asymmetric_potential(), 1, 512, 32);
  PerturbTable pt(band);
  CHECK(pt.dpw_crosscheck() <= 1e-7);
  CHECK(pt.orthogonality_residual() <= 1e-12);

  SUBCASE("responses are gauge covariant") {
    BandTable tw = band.twisted([](double q) { return 0.3 * std::sin(q); });
    PerturbTable ptw(tw);
    for (double p : {0.2, -1.1, 2.7})
      CHECK(std::abs(pt.a1(p) - ptw.a1(p)) <= 1e-8);
  }
}

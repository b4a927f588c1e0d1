#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "bloch/potential.hpp"
#include "doctest.h"

using namespace bloch;

TEST_CASE("lattice invariants") {
  Lattice lat(1.0);
  CHECK(lat.reciprocal() * lat.period == doctest::Approx(kTwoPi).epsilon(1e-16));
  Lattice lat2(2.5);
  CHECK(lat2.reciprocal() * lat2.period == doctest::Approx(kTwoPi).epsilon(1e-16));
  CHECK_THROWS_AS(Lattice(0.0), std::invalid_argument);
  CHECK_THROWS_AS(Lattice(-1.0), std::invalid_argument);
}

TEST_CASE("potential construction and evaluation") {
  Lattice lat(1.0);

  SUBCASE("empty set is the zero potential") {
    PeriodicPotential V = make_periodic_potential(lat, {});
    CHECK(V.eval(17.3) == 0.0);
  }

  SUBCASE("cosine") {
    PeriodicPotential V = make_periodic_potential(lat, {{1, 0.5}, {-1, 0.5}});
    CHECK(V.eval(0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(V.eval(0.25) == doctest::Approx(0.0).epsilon(1e-14));
  }

  SUBCASE("cosine plus sine") {
    PeriodicPotential V = make_periodic_potential(
        lat, {{1, 0.5}, {-1, 0.5}, {2, cx(0, -0.15)}, {-2, cx(0, 0.15)}});
    auto ref = [](double z) {
      return std::cos(kTwoPi * z) + 0.3 * std::sin(2 * kTwoPi * z);
    };
    for (double z : {0.0, 0.1, 0.37, 0.5, 0.81})
      CHECK(V.eval(z) == doctest::Approx(ref(z)).epsilon(1e-13));
  }

  SUBCASE("hermitian symmetrization is recorded") {
    PeriodicPotential V = make_periodic_potential(lat, {{1, cx(0.5, 0.2)}});
    CHECK(V.symmetrization_adjustment() > 0.0);
    CHECK(V.fourier(-1) == std::conj(V.fourier(1)));
  }

  SUBCASE("non-finite coefficients rejected") {
    CHECK_THROWS_AS(
        make_periodic_potential(lat, {{1, cx(std::nan(""), 0.0)}}),
        std::invalid_argument);
  }
}

TEST_CASE("potential realness and periodicity properties") {
  Lattice lat(1.0);
  PeriodicPotential V = make_periodic_potential(
      lat, {{1, cx(0.3, 0.1)}, {2, cx(0.0, -0.15)}, {3, cx(0.05, 0.02)}});
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    double z = dist(rng);
    double v = V.eval(z);  // asserts the imaginary residual internally
    CHECK(V.eval(z + lat.period) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("external potential exact derivatives") {
  SUBCASE("quadratic") {
    ExternalPotential U(ExternalPotential::Kind::quadratic, {0.0, 0.0, 0.5});
    CHECK(U.derivative(2.0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(U.derivative(2.0, 1) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(U.derivative(2.0, 2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(U.derivative(2.0, 3) == 0.0);
    CHECK(U.derivative(2.0, 5) == 0.0);
  }
  SUBCASE("linear") {
    ExternalPotential U(ExternalPotential::Kind::linear, {1.0, 0.5});
    CHECK(U.derivative(-3.0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    for (int k = 2; k <= 5; ++k) CHECK(U.derivative(-3.0, k) == 0.0);
  }
  SUBCASE("order bounds") {
    ExternalPotential U(ExternalPotential::Kind::linear, {0.0, 1.0});
    CHECK_THROWS_AS(U.derivative(0.0, 6), std::invalid_argument);
    CHECK_THROWS_AS(U.derivative(0.0, -1), std::invalid_argument);
  }
  SUBCASE("smooth closed form") {
    ExternalPotential U(ExternalPotential::Kind::smooth, {0.7, 1.3, 0.2});
    auto ref = [](double x, int k) {
      return 0.7 * std::pow(1.3, k) * std::cos(1.3 * x + 0.2 + 0.5 * kPi * k);
    };
    for (int k = 0; k <= 5; ++k)
      CHECK(U.derivative(0.9, k) == doctest::Approx(ref(0.9, k)).epsilon(1e-14));
  }
}

TEST_CASE("finite differences converge to the stated derivatives at order 2") {
  ExternalPotential U(ExternalPotential::Kind::polynomial, {0.1, -0.3, 0.7, 0.2, -0.05});
  const double x = 0.83;
  for (int k = 1; k <= 4; ++k) {
    double exact = U.derivative(x, k);
    auto fd = [&](double h) {
      return (U.derivative(x + h, k - 1) - U.derivative(x - h, k - 1)) / (2 * h);
    };
    double e1 = std::abs(fd(1e-3) - exact);
    double e2 = std::abs(fd(5e-4) - exact);
    if (e1 > 1e-12) CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.2));
  }
}

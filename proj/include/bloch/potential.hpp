#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bloch/types.hpp"

namespace bloch {

// Unit cell [0, a) of a 1D lattice; reciprocal lattice spacing 2*pi/a.
struct Lattice {
  double period = 1.0;

  Lattice() = default;
  explicit Lattice(double a) : period(a) {
    if (!(a > 0.0) || !std::isfinite(a))
      throw std::invalid_argument("Lattice: period must be positive and finite");
  }
  double reciprocal() const { return kTwoPi / period; }
};

// Real-valued lattice potential V(z) = sum_m vhat[m] exp(i m G z).
// Hermitian symmetry vhat[-m] = conj(vhat[m]) is enforced at construction.
class PeriodicPotential {
 public:
  PeriodicPotential() = default;
  PeriodicPotential(Lattice lattice, const std::map<int, cx>& coeffs);

  double eval(double z) const;
  cx fourier(int m) const;
  int max_index() const;
  double coeff_abs_sum() const;
  const Lattice& lattice() const { return lattice_; }
  const std::map<int, cx>& coeffs() const { return coeffs_; }
  // Largest change any coefficient underwent during symmetrization.
  double symmetrization_adjustment() const { return adjustment_; }

 private:
  Lattice lattice_;
  std::map<int, cx> coeffs_;
  double adjustment_ = 0.0;
};

PeriodicPotential make_periodic_potential(const Lattice& lattice,
                                          const std::map<int, cx>& coeffs);

// Slowly varying scalar potential with exact derivatives up to order 5.
class ExternalPotential {
 public:
  enum class Kind { linear, quadratic, polynomial, smooth };

  ExternalPotential() : kind_(Kind::linear), params_{0.0, 0.0} {}
  ExternalPotential(Kind kind, std::vector<double> params);
  static ExternalPotential from_kind_string(const std::string& kind,
                                            std::vector<double> params);

  // k-th derivative of U at x, 0 <= k <= 5.
  double derivative(double x, int order) const;
  double operator()(double x) const { return derivative(x, 0); }

  Kind kind() const { return kind_; }
  const std::vector<double>& params() const { return params_; }

 private:
  Kind kind_;
  std::vector<double> params_;
};

}  // namespace bloch

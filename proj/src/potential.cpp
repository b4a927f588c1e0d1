#include "bloch/potential.hpp"

#include <cmath>

namespace bloch {

PeriodicPotential::PeriodicPotential(Lattice lattice, const std::map<int, cx>& coeffs)
    : lattice_(lattice) {
  for (const auto& [m, v] : coeffs) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw std::invalid_argument("PeriodicPotential: non-finite coefficient at m=" +
                                  std::to_string(m));
  }
  // Symmetrize so V is real: vhat[m] <- (vhat[m] + conj(vhat[-m]))/2,
  // covering the union of the +/-m index pairs.
  std::map<int, cx> given = coeffs;
  auto at = [&given](int m) {
    auto it = given.find(m);
    return it == given.end() ? cx(0.0, 0.0) : it->second;
  };
  for (const auto& [m, v] : given) {
    for (int idx : {m, -m}) {
      if (coeffs_.count(idx)) continue;
      cx sym = 0.5 * (at(idx) + std::conj(at(-idx)));
      adjustment_ = std::max(adjustment_, std::abs(sym - at(idx)));
      if (sym != cx(0.0, 0.0)) coeffs_[idx] = sym;
    }
  }
}

double PeriodicPotential::eval(double z) const {
  const double G = lattice_.reciprocal();
  cx s = 0.0;
  for (const auto& [m, v] : coeffs_) s += v * std::exp(kImag * (m * G * z));
  const double bound = 1e-13 * std::max(coeff_abs_sum(), 1.0);
  if (std::abs(s.imag()) > bound)
    throw std::runtime_error("PeriodicPotential::eval: imaginary residual " +
                             std::to_string(s.imag()) + " exceeds bound");
  return s.real();
}

cx PeriodicPotential::fourier(int m) const {
  auto it = coeffs_.find(m);
  return it == coeffs_.end() ? cx(0.0, 0.0) : it->second;
}

int PeriodicPotential::max_index() const {
  int mmax = 0;
  for (const auto& [m, v] : coeffs_) mmax = std::max(mmax, std::abs(m));
  return mmax;
}

double PeriodicPotential::coeff_abs_sum() const {
  double s = 0.0;
  for (const auto& [m, v] : coeffs_) s += std::abs(v);
  return s;
}

PeriodicPotential make_periodic_potential(const Lattice& lattice,
                                          const std::map<int, cx>& coeffs) {
  return PeriodicPotential(lattice, coeffs);
}

ExternalPotential::ExternalPotential(Kind kind, std::vector<double> params)
    : kind_(kind), params_(std::move(params)) {
  for (double c : params_)
    if (!std::isfinite(c))
      throw std::invalid_argument("ExternalPotential: non-finite parameter");
  switch (kind_) {
    case Kind::linear:
      params_.resize(2, 0.0);
      break;
    case Kind::quadratic:
      params_.resize(3, 0.0);
      break;
    case Kind::polynomial:
      if (params_.empty()) params_.push_back(0.0);
      break;
    case Kind::smooth:
      // A*cos(k*x + phi)
      params_.resize(3, 0.0);
      break;
  }
}

ExternalPotential ExternalPotential::from_kind_string(const std::string& kind,
                                                      std::vector<double> params) {
  if (kind == "linear") return ExternalPotential(Kind::linear, std::move(params));
  if (kind == "quadratic") return ExternalPotential(Kind::quadratic, std::move(params));
  if (kind == "polynomial") return ExternalPotential(Kind::polynomial, std::move(params));
  if (kind == "smooth") return ExternalPotential(Kind::smooth, std::move(params));
  throw std::invalid_argument("ExternalPotential: unknown kind '" + kind + "'");
}

double ExternalPotential::derivative(double x, int order) const {
  if (order < 0 || order > 5)
    throw std::invalid_argument("ExternalPotential: derivative order must be in 0..5");
  if (kind_ == Kind::smooth) {
    const double A = params_[0], k = params_[1], phi = params_[2];
    return A * std::pow(k, order) * std::cos(k * x + phi + 0.5 * kPi * order);
  }
  // linear/quadratic/polynomial share the monomial rule.
  const std::vector<double>& c = params_;
  double s = 0.0;
  for (int j = static_cast<int>(c.size()) - 1; j >= order; --j) {
    double fac = 1.0;
    for (int i = 0; i < order; ++i) fac *= static_cast<double>(j - i);
    s = s * x + fac * c[static_cast<size_t>(j)];
  }
  return s;
}

}  // namespace bloch

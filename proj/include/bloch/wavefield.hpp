#pragma once

#include <functional>
#include <string>

#include "bloch/trajectory.hpp"

namespace bloch {

struct SpatialGrid {
  double xmin = 0.0, xmax = 1.0;
  int n = 0;

  double dx() const { return (xmax - xmin) / n; }
  double length() const { return xmax - xmin; }
  double point(int j) const { return xmin + j * dx(); }
  bool operator==(const SpatialGrid&) const = default;
};

struct Wavefield {
  SpatialGrid grid;
  double epsilon = 1.0;
  double time = 0.0;
  std::vector<cx> values;

  double mass() const;
};

// power-of-two check plus the fast-scale resolution requirement dx <= eps*a/8
void validate_grid(const SpatialGrid& grid, double eps, double period);

using RealFn = std::function<double(double)>;

// psi(x) = aI(x) chi(x/eps, phiI'(x)) exp(i phiI(x)/eps)
Wavefield build_initial_data(const RealFn& aI, const RealFn& phiI, const RealFn& dphiI,
                             const BandTable& band, double eps, const SpatialGrid& grid);

// Same, plus the first-order content that makes the data well prepared to
// second order for a plane-wave phase K0 x:
//   psi = [aI chi + eps (dU(x) aI what - i aI' dpchi)] exp(i K0 x / eps)
Wavefield build_prepared_initial_data(const RealFn& aI, const RealFn& daI, double K0,
                                      const ExternalPotential& U,
                                      const PerturbTable& pt, double eps,
                                      const SpatialGrid& grid);

// Plane-wave/linear-potential family reconstruction:
//   psi_w = A0(t,x) (chi + eps*flag*c1*what)(x/eps, b1(t))
//           * exp(i (b0 + b1 x)/eps + i S1 + i eps S2)
// with the transported envelope A0(t,x) = aI(x - displacement(t)).
Wavefield reconstruct_wkb(const SpecialCaseSolution& sol, const RealFn& aI,
                          const PerturbTable& pt, double eps, const SpatialGrid& grid,
                          bool include_first_order, double t);

// Fraction of mass carried by band n, via the discrete Bloch fibering of the
// spatial spectrum. The grid must hold an integer number of eps-cells.
double band_occupation(const Wavefield& psi, const PeriodicPotential& V, int n, int M);
std::vector<double> all_band_occupations(const Wavefield& psi, const PeriodicPotential& V,
                                         int M);

// binary samples (little-endian doubles re,im) plus a json sidecar
void save_wavefield(const Wavefield& psi, const std::string& basename);
Wavefield load_wavefield(const std::string& basename);

}  // namespace bloch

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bloch/fourier.hpp"
#include "bloch/potential.hpp"

namespace bloch {

struct NearDegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cell eigenstate at crystal momentum p in the plane-wave basis exp(i m G z),
// m = -M..M, unit l2-normalized coefficients.
struct BlochState {
  double p = 0.0;
  int n = 1;
  double energy = 0.0;
  VecC coeffs;
  int cutoff = 0;
  double reciprocal = kTwoPi;
  double gap = 0.0;       // distance to the nearest other eigenvalue
  double residual = 0.0;  // ||H c - E c||_2

  bool near_degenerate() const { return gap < 1e-8; }
};

MatC assemble_hamiltonian(const PeriodicPotential& V, double p, int M);
BlochState solve_band(const MatC& H, int n, double p, double G);
BlochState solve_band(const PeriodicPotential& V, double p, int M, int n);

// <chi, (p - i d/dz) chi> = sum_m (p + mG) |c_m|^2
double group_velocity_hf(const BlochState& state);

struct GaugeFixResult {
  std::vector<VecC> coeffs;
  double zak_phase = 0.0;
  double closure_defect = 0.0;  // phase mismatch of the wrap-around step
  double min_overlap = 1.0;
  // false when the band does not close smoothly across the zone boundary
  // (non-isolated edge); no twist is applied then
  bool closable = true;
};

// Parallel transport along the grid, then a uniform twist that distributes the
// Zak phase so the gauge closes periodically across the zone.
GaugeFixResult fix_gauge(const std::vector<BlochState>& states);

struct EnergyDerivs {
  double d1 = 0, d2 = 0, d3 = 0, d4 = 0, d5 = 0;
  double get(int order) const;
};

// Tabulated single-band data on a uniform (half-offset) grid over the zone.
class BandTable {
 public:
  BandTable(const PeriodicPotential& V, int n, int Np, int M);

  // --- grid data -----------------------------------------------------------
  int grid_size() const { return Np_; }
  int cutoff() const { return M_; }
  int band_index() const { return n_; }
  const PeriodicPotential& potential() const { return V_; }
  const Lattice& lattice() const { return V_.lattice(); }
  double reciprocal() const { return V_.lattice().reciprocal(); }
  double grid_point(int j) const { return p_first_ + j * dp_; }
  double grid_spacing() const { return dp_; }

  const std::vector<double>& energies() const { return E_; }
  const std::vector<double>& denergies(int order) const;  // 1..5, pointwise chain
  const std::vector<double>& denergy1_spectral() const { return dE1_spec_; }
  const std::vector<double>& berry_grid() const { return A0_; }
  const std::vector<double>& dberry_grid() const { return dA0_; }
  const std::vector<double>& d2berry_grid() const { return d2A0_; }
  const VecC& chi(int j) const { return chi_[static_cast<size_t>(j)]; }
  const VecC& dpchi(int j) const { return dpchi_[static_cast<size_t>(j)]; }
  const VecC& dp2chi(int j) const { return dp2chi_[static_cast<size_t>(j)]; }
  const VecC& dp3chi(int j) const { return dp3chi_[static_cast<size_t>(j)]; }
  double state_gap(int j) const { return gap_[static_cast<size_t>(j)]; }

  double zak_phase() const { return zak_; }
  double min_gap() const { return min_gap_; }
  // min gap including the high-symmetry points p = 0 and p = G/2, which a
  // node grid with half offset never samples exactly
  double isolation_margin() const { return isolation_margin_; }
  double gauge_closure_defect() const { return closure_defect_; }
  // max over grid of ||orthogonal part of spectral dpchi - Sternheimer dpchi||
  double dpchi_crosscheck() const { return dpchi_crosscheck_; }
  // max over grid of |Re<chi, dpchi>| (should vanish under unit normalization)
  double berry_real_residual() const { return berry_real_residual_; }
  double max_eigen_residual() const { return max_residual_; }

  // --- interpolation -------------------------------------------------------
  // Smooth periodic tables interpolate trigonometrically; if the band is not
  // safely isolated over the zone (e.g. the free band touching at the edge),
  // scalar band quantities fall back to pointwise eigensolves.
  bool fast_path() const { return fast_path_; }

  double energy(double p) const;
  double denergy(double p, int order) const;
  EnergyDerivs denergy_all(double p) const;
  double berry(double p) const;
  double dberry(double p) const;
  double d2berry(double p) const;
  VecC chi_at(double p) const;
  VecC dpchi_at(double p) const;
  VecC dp2chi_at(double p) const;
  VecC dp3chi_at(double p) const;

  // index of the grid node nearest to p (after reduction to the zone)
  int nearest_node(double p) const;
  double reduce(double p) const;  // reduce into [p_first - dp/2, + G)

  // Gauge transformation chi -> exp(i zeta(p)) chi; energies are copied
  // verbatim, the gauge-dependent tables are rebuilt.
  BandTable twisted(const std::function<double(double)>& zeta) const;

 private:
  BandTable() = default;
  void build_derived();
  void flatten_connection();
  std::vector<double> connection_samples() const;

  PeriodicPotential V_;
  int n_ = 1, Np_ = 0, M_ = 0;
  double p_first_ = 0.0, dp_ = 0.0;

  std::vector<double> E_, dE1_spec_;
  std::vector<std::vector<double>> dE_;  // [order-1][j], chain values
  std::vector<double> A0_, dA0_, d2A0_, gap_;
  std::vector<VecC> chi_, dpchi_, dp2chi_, dp3chi_;
  double zak_ = 0.0, min_gap_ = 0.0, isolation_margin_ = 0.0, closure_defect_ = 0.0;
  double dpchi_crosscheck_ = 0.0, berry_real_residual_ = 0.0, max_residual_ = 0.0;
  bool fast_path_ = true;

  TrigSeries interp_E_, interp_A0_, interp_dA0_, interp_d2A0_;
  std::vector<TrigSeries> interp_dE_;
  TrigSeries torus_chi_, torus_dpchi_, torus_dp2chi_, torus_dp3chi_;

  VecC vector_at(double p, const TrigSeries& torus, int which) const;
};

// (H - E) y = r restricted to the orthogonal complement of c.
// The LU is of (H - E + c c^dagger); callers may reuse it across solves.
VecC deflated_solve(const Eigen::PartialPivLU<MatC>& lu, const VecC& c, const VecC& r);

// Pointwise energy-derivative chain (orders 1..5) at one p; gauge-free.
// Optionally returns the chi p-derivatives in the gauge fixed by the supplied
// Berry-connection values (A0, A0', A0'').
struct BandPointData {
  double E;
  EnergyDerivs dE;
  VecC chi, y1, y2, y3;
};
BandPointData compute_band_point(const PeriodicPotential& V, int M, int n, double p,
                                 const VecC* gauge_chi, double A0, double dA0,
                                 double d2A0);

}  // namespace bloch

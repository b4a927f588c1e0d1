#pragma once

#include <optional>

#include "bloch/config.hpp"
#include "bloch/splitstep.hpp"

namespace bloch {

// least squares on log(err) vs log(eps)
struct FitResult {
  double slope = 0, intercept = 0, residual = 0;
};
FitResult convergence_fit(const std::vector<double>& eps,
                          const std::vector<double>& err);

PeriodicPotential potential_from_config(const Config& cfg);
ExternalPotential external_from_config(const Config& cfg);

// Gaussian packet on a single band driven by a slow potential; the reference
// solver's center is compared against the corrected characteristics.
struct CenterScenario {
  PeriodicPotential V;
  int n = 1, M = 32, Np = 256;
  ExternalPotential U;
  double K0 = 0.4;
  double x0 = 1.0;
  double sigma0 = 0.3;       // packet width scale
  bool sigma_fixed = false;  // true: sigma = sigma0; false: sigma0 * sqrt(eps)
  double T = 3.0;
  double box_halfwidth = 4.0;
  double snapshot_interval = 0.02;
  double traj_dt_max = 1e-3;
  bool prepared = true;  // include the first-order content in the data

  static CenterScenario quadratic_default();
  static CenterScenario linear_default();
};

struct CenterRunResult {
  double eps = 0;
  double P0 = 0;
  std::vector<double> times;
  std::vector<double> center_ref;
  std::map<int, std::vector<double>> center_pred;  // per correction order
  std::map<int, double> max_error;                 // per correction order
  std::vector<double> shift_meas, shift_pred;      // vs the order-0 flow
  double shift_rel_err = 0;
};

CenterRunResult run_center_study(const CenterScenario& sc, const PerturbTable& pt,
                                 double eps, const std::vector<int>& orders);

// Plane-wave-phase packet under a linear potential: reconstruction vs direct
// solve, L2 error per eps.
struct WavefieldScenario {
  PeriodicPotential V;
  int n = 1, M = 32, Np = 256;
  double K0 = 0.5, c0 = 0.0, c1 = 1.0;
  double x0 = 0.0, sigma = 0.4;
  double T = 1.0;
  double box_halfwidth = 8.0;
  bool include_first_order = true;

  static WavefieldScenario mathieu_default();
  ExternalPotential external() const {
    return ExternalPotential(ExternalPotential::Kind::linear, {c0, c1});
  }
  RealFn envelope() const;
};

double run_wavefield_error(const WavefieldScenario& sc, const PerturbTable& pt,
                           double eps);

// physical-center difference between two gauges related by a periodic twist
struct GaugeStudyResult {
  double berry_shift_err = 0;      // |dA0 shift + zeta'| max over grid
  double energy_table_equal = 0;   // max |E - E_twist| (bitwise copy: 0)
  double es2_linear_family_err = 0;
  std::vector<double> eps_list;
  std::vector<double> center_diff;
  FitResult fit;
};
GaugeStudyResult run_gauge_study(const CenterScenario& sc, const PerturbTable& pt,
                                 const std::vector<double>& eps_list);

// CLI entry; returns a process exit code (nonzero when --check fails).
int run_experiment(const std::string& kind, const Config& cfg,
                   const std::string& outdir, bool check);

}  // namespace bloch

#pragma once

#include "bloch/wavefield.hpp"

namespace bloch {

struct EvolveConfig {
  double dt = 0.0;       // if 0, defaults to eps/200
  double T = 1.0;
  int record_every = 0;  // 0: record only t=0 and t=T
  bool check_tail = true;
};

struct Observables {
  double mass = 0, energy = 0, center = 0, momentum = 0;
};

struct EvolveRecord {
  std::vector<double> times;
  std::vector<Observables> obs;
  std::vector<Wavefield> snapshots;  // filled only when keep_fields
  double max_mass_drift = 0.0;       // relative, per run
};

Observables observables(const Wavefield& psi, const PeriodicPotential& V,
                        const ExternalPotential& U);

// Strang splitting for i eps psi_t = (-eps^2/2 dxx + V(x/eps) + U) psi:
// half potential phase, exact kinetic Fourier step, half potential phase.
EvolveRecord split_step_evolve(const Wavefield& psi0, const PeriodicPotential& V,
                               const ExternalPotential& U, const EvolveConfig& cfg,
                               bool keep_fields = false);

// Truncated two-scale norm of the difference: s=0 gives the L2 distance,
// s=1 adds |eps d/dx (.)| and |x (.)| terms.
double wkb_error(const Wavefield& psi, const Wavefield& psi_w, int s);

}  // namespace bloch

#pragma once

#include "bloch/perturb.hpp"

namespace bloch {

enum class CorrectionOrder { order0 = 0, order1 = 1, order2 = 2 };

struct CausticError : std::runtime_error {
  double last_valid_time;
  CausticError(const std::string& msg, double t)
      : std::runtime_error(msg), last_valid_time(t) {}
};

struct TrajectoryState {
  double t = 0, Q = 0, P = 0, S = 0;
  AuxState aux;
};

struct TrajectoryDeriv {
  double dQ = 0, dP = 0, dS = 0;
  AuxState daux;
};

struct TrajectoryOptions {
  bool freeze_aux = false;
  double caustic_limit = 1e6;
};

// Canonical characteristics with corrections of order 0/1/2 plus the
// transported jets of the leading phase and log-amplitude.
class TrajectoryModel {
 public:
  TrajectoryModel(const PerturbTable& pt, ExternalPotential U, double eps,
                  TrajectoryOptions opts = {});

  const BandTable& band() const { return pt_->band(); }
  const PerturbTable& perturb() const { return *pt_; }
  const ExternalPotential& external() const { return U_; }
  double epsilon() const { return eps_; }

  // freeze_aux skips the jet evolution (and its caustic guard); integrate
  // uses it to continue past a focal point at orders that ignore the jets
  TrajectoryDeriv rhs(const TrajectoryState& s, CorrectionOrder order,
                      bool freeze_aux = false) const;
  AuxState aux_rhs(const AuxState& aux, const EnergyDerivs& dE, double U2, double U3,
                   double U4, double U5) const;

  double modified_hamiltonian(const TrajectoryState& s, CorrectionOrder order) const;
  double physical_center(const TrajectoryState& s, CorrectionOrder order) const;

  // Value and p-derivative of the second-order energy with the jets frozen;
  // the derivative comes from trigonometric differentiation of the grid-
  // sampled field.
  double e2_value(double p, const AuxState& aux, double U1, double U2) const;
  double e2_dp(double p, const AuxState& aux, double U1, double U2) const;

 private:
  const PerturbTable* pt_;
  ExternalPotential U_;
  double eps_;
  TrajectoryOptions opts_;
  std::vector<E2Basis> node_basis_;

  void sample_e2(const AuxState& aux, double U1, double U2, std::vector<double>& out) const;
};

struct Trajectory {
  std::vector<TrajectoryState> states;
  double step_error = 0.0;  // from one dt/2 re-run of the final state
  bool aborted = false;     // order-2 runs stop at a caustic
  bool aux_frozen = false;  // lower orders freeze the jets there instead
  double last_valid_time = 0.0;
  double aux_valid_time = 0.0;
  std::string abort_reason;

  const TrajectoryState& back() const { return states.back(); }
};

Trajectory integrate(const TrajectoryModel& model, const TrajectoryState& start,
                     CorrectionOrder order, double dt, double T,
                     bool estimate_error = false);

// Plane-wave initial phase with a linear external potential: closed-form
// momentum, quadrature for the remaining phase pieces.
class SpecialCaseSolution {
 public:
  SpecialCaseSolution(const PerturbTable& pt, double K0, double S0_const,
                      double A0_const, double c0, double c1);

  double K0() const { return K0_; }
  double S0_const() const { return S0_; }
  double A0_const() const { return A0c_; }
  double c0() const { return c0_; }
  double c1() const { return c1_; }

  double b1(double t) const { return K0_ - c1_ * t; }
  double b0(double t) const;            // S0 - int E0(b1) - c0 t
  double S1(double t) const;            // -int E1(b1)
  double S2(double t) const;            // -int Es2(b1)
  double displacement(double t) const;  // int dE0/dp (b1)

 private:
  const PerturbTable* pt_;
  double K0_, S0_, A0c_, c0_, c1_;
  double quad(const std::function<double(double)>& f, double t) const;
};

}  // namespace bloch

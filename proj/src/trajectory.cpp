#include "bloch/trajectory.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

namespace bloch {

TrajectoryModel::TrajectoryModel(const PerturbTable& pt, ExternalPotential U, double eps,
                                 TrajectoryOptions opts)
    : pt_(&pt), U_(std::move(U)), eps_(eps), opts_(opts) {
  const int Np = band().grid_size();
  node_basis_.reserve(static_cast<size_t>(Np));
  for (int j = 0; j < Np; ++j) node_basis_.push_back(e2_basis_node(pt, j));
}

void TrajectoryModel::sample_e2(const AuxState& aux, double U1, double U2,
                                std::vector<double>& out) const {
  const int Np = band().grid_size();
  out.resize(static_cast<size_t>(Np));
  for (int j = 0; j < Np; ++j)
    out[static_cast<size_t>(j)] = e2_from_basis(node_basis_[static_cast<size_t>(j)], aux, U1, U2);
}

double TrajectoryModel::e2_value(double p, const AuxState& aux, double U1,
                                 double U2) const {
  if (band().fast_path()) {
    std::vector<double> field;
    sample_e2(aux, U1, U2, field);
    TrigSeries s(field, band().grid_point(0), band().reciprocal());
    return s.eval_real(p);
  }
  return e2_from_basis(e2_basis(*pt_, p), aux, U1, U2);
}

double TrajectoryModel::e2_dp(double p, const AuxState& aux, double U1, double U2) const {
  if (band().fast_path()) {
    std::vector<double> field;
    sample_e2(aux, U1, U2, field);
    std::vector<double> d = spectral_derivative(field, band().reciprocal(), 1);
    TrigSeries s(d, band().grid_point(0), band().reciprocal());
    return s.eval_real(p);
  }
  // centered difference on the pointwise path
  const double h = 1e-5 * band().reciprocal();
  double fp = e2_from_basis(e2_basis(*pt_, p + h), aux, U1, U2);
  double fm = e2_from_basis(e2_basis(*pt_, p - h), aux, U1, U2);
  return (fp - fm) / (2.0 * h);
}

AuxState TrajectoryModel::aux_rhs(const AuxState& a, const EnergyDerivs& dE, double U2,
                                  double U3, double U4, double U5) const {
  const double e2 = dE.d2, e3 = dE.d3, e4 = dE.d4, e5 = dE.d5;
  AuxState d;
  d.p2 = -U2 - a.p2 * a.p2 * e2;
  d.p3 = -U3 - 3.0 * a.p2 * a.p3 * e2 - a.p2 * a.p2 * a.p2 * e3;
  d.p4 = -U4 - (4.0 * a.p2 * a.p4 + 3.0 * a.p3 * a.p3) * e2 -
         6.0 * a.p2 * a.p2 * a.p3 * e3 - std::pow(a.p2, 4) * e4;
  d.p5 = -U5 - (5.0 * a.p2 * a.p5 + 10.0 * a.p3 * a.p4) * e2 -
         (10.0 * a.p2 * a.p2 * a.p4 + 15.0 * a.p2 * a.p3 * a.p3) * e3 -
         10.0 * std::pow(a.p2, 3) * a.p3 * e4 - std::pow(a.p2, 5) * e5;
  d.l0 = -0.5 * a.p2 * e2;
  d.l1 = -a.l1 * a.p2 * e2 - 0.5 * a.p3 * e2 - 0.5 * a.p2 * a.p2 * e3;
  d.l2 = -2.0 * a.l2 * a.p2 * e2 - a.l1 * a.p3 * e2 - a.l1 * a.p2 * a.p2 * e3 -
         0.5 * a.p4 * e2 - 1.5 * a.p2 * a.p3 * e3 - 0.5 * std::pow(a.p2, 3) * e4;
  d.l3 = -3.0 * a.l3 * a.p2 * e2 - 3.0 * a.l2 * a.p3 * e2 - a.l1 * a.p4 * e2 -
         3.0 * a.l2 * a.p2 * a.p2 * e3 - 3.0 * a.l1 * a.p2 * a.p3 * e3 -
         a.l1 * std::pow(a.p2, 3) * e4 - 0.5 * a.p5 * e2 - 2.0 * a.p2 * a.p4 * e3 -
         1.5 * a.p3 * a.p3 * e3 - 3.0 * a.p2 * a.p2 * a.p3 * e4 -
         0.5 * std::pow(a.p2, 4) * e5;
  return d;
}

TrajectoryDeriv TrajectoryModel::rhs(const TrajectoryState& s, CorrectionOrder order,
                                     bool freeze_aux) const {
  freeze_aux = freeze_aux || opts_.freeze_aux;
  if (!freeze_aux && std::abs(s.aux.p2) > opts_.caustic_limit)
    throw CausticError("trajectory: phase Hessian beyond caustic guard", s.t);

  const BandTable& b = band();
  EnergyDerivs dE = b.denergy_all(s.P);
  const double U0 = U_.derivative(s.Q, 0);
  const double U1 = U_.derivative(s.Q, 1);
  const double U2 = U_.derivative(s.Q, 2);
  const double U3 = U_.derivative(s.Q, 3);
  const double U4 = U_.derivative(s.Q, 4);
  const double U5 = U_.derivative(s.Q, 5);

  TrajectoryDeriv d;
  d.dQ = dE.d1;
  d.dP = -U1;
  double H = b.energy(s.P) + U0;
  if (order >= CorrectionOrder::order1) {
    d.dQ += eps_ * b.dberry(s.P) * U1;
    d.dP -= eps_ * U2 * b.berry(s.P);
    H += eps_ * b.berry(s.P) * U1;
  }
  if (order == CorrectionOrder::order2) {
    d.dQ += eps_ * eps_ * e2_dp(s.P, s.aux, U1, U2);
    d.dP -= eps_ * eps_ * forcing_from_basis(e2_basis(*pt_, s.P), s.aux, U1, U2, U3);
    H += eps_ * eps_ * e2_value(s.P, s.aux, U1, U2);
  }
  d.dS = s.P * d.dQ - H;
  d.daux = freeze_aux ? AuxState{} : aux_rhs(s.aux, dE, U2, U3, U4, U5);
  return d;
}

double TrajectoryModel::modified_hamiltonian(const TrajectoryState& s,
                                             CorrectionOrder order) const {
  const BandTable& b = band();
  double H = b.energy(s.P) + U_.derivative(s.Q, 0);
  if (order >= CorrectionOrder::order1)
    H += eps_ * b.berry(s.P) * U_.derivative(s.Q, 1);
  if (order == CorrectionOrder::order2)
    H += eps_ * eps_ *
         e2_value(s.P, s.aux, U_.derivative(s.Q, 1), U_.derivative(s.Q, 2));
  return H;
}

double TrajectoryModel::physical_center(const TrajectoryState& s,
                                        CorrectionOrder order) const {
  double x = s.Q;
  if (order >= CorrectionOrder::order1) x += eps_ * band().berry(s.P);
  if (order == CorrectionOrder::order2)
    x += eps_ * eps_ * U_.derivative(s.Q, 1) * pt_->a1(s.P);
  return x;
}

namespace {

TrajectoryState axpy(const TrajectoryState& s, const TrajectoryDeriv& d, double h) {
  TrajectoryState r = s;
  r.t = s.t + h;
  r.Q = s.Q + h * d.dQ;
  r.P = s.P + h * d.dP;
  r.S = s.S + h * d.dS;
  r.aux.p2 = s.aux.p2 + h * d.daux.p2;
  r.aux.p3 = s.aux.p3 + h * d.daux.p3;
  r.aux.p4 = s.aux.p4 + h * d.daux.p4;
  r.aux.p5 = s.aux.p5 + h * d.daux.p5;
  r.aux.l0 = s.aux.l0 + h * d.daux.l0;
  r.aux.l1 = s.aux.l1 + h * d.daux.l1;
  r.aux.l2 = s.aux.l2 + h * d.daux.l2;
  r.aux.l3 = s.aux.l3 + h * d.daux.l3;
  return r;
}

TrajectoryDeriv combine(const TrajectoryDeriv& k1, const TrajectoryDeriv& k2,
                        const TrajectoryDeriv& k3, const TrajectoryDeriv& k4) {
  auto mix = [](double a, double b, double c, double d) {
    return (a + 2.0 * b + 2.0 * c + d) / 6.0;
  };
  TrajectoryDeriv d;
  d.dQ = mix(k1.dQ, k2.dQ, k3.dQ, k4.dQ);
  d.dP = mix(k1.dP, k2.dP, k3.dP, k4.dP);
  d.dS = mix(k1.dS, k2.dS, k3.dS, k4.dS);
  d.daux.p2 = mix(k1.daux.p2, k2.daux.p2, k3.daux.p2, k4.daux.p2);
  d.daux.p3 = mix(k1.daux.p3, k2.daux.p3, k3.daux.p3, k4.daux.p3);
  d.daux.p4 = mix(k1.daux.p4, k2.daux.p4, k3.daux.p4, k4.daux.p4);
  d.daux.p5 = mix(k1.daux.p5, k2.daux.p5, k3.daux.p5, k4.daux.p5);
  d.daux.l0 = mix(k1.daux.l0, k2.daux.l0, k3.daux.l0, k4.daux.l0);
  d.daux.l1 = mix(k1.daux.l1, k2.daux.l1, k3.daux.l1, k4.daux.l1);
  d.daux.l2 = mix(k1.daux.l2, k2.daux.l2, k3.daux.l2, k4.daux.l2);
  d.daux.l3 = mix(k1.daux.l3, k2.daux.l3, k3.daux.l3, k4.daux.l3);
  return d;
}

TrajectoryState rk4_step(const TrajectoryModel& m, const TrajectoryState& s,
                         CorrectionOrder order, double h, bool freeze_aux) {
  TrajectoryDeriv k1 = m.rhs(s, order, freeze_aux);
  TrajectoryDeriv k2 = m.rhs(axpy(s, k1, 0.5 * h), order, freeze_aux);
  TrajectoryDeriv k3 = m.rhs(axpy(s, k2, 0.5 * h), order, freeze_aux);
  TrajectoryDeriv k4 = m.rhs(axpy(s, k3, h), order, freeze_aux);
  TrajectoryState out = axpy(s, combine(k1, k2, k3, k4), h);
  out.t = s.t + h;
  return out;
}

}  // namespace

Trajectory integrate(const TrajectoryModel& model, const TrajectoryState& start,
                     CorrectionOrder order, double dt, double T, bool estimate_error) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate: dt must be positive");
  if (T < 0.0) throw std::invalid_argument("integrate: T must be nonnegative");
  Trajectory out;
  const long nsteps = std::lround(T / dt);
  const double h = nsteps > 0 ? T / static_cast<double>(nsteps) : dt;
  out.states.reserve(static_cast<size_t>(nsteps) + 1);
  out.states.push_back(start);
  bool frozen = false;
  for (long i = 0; i < nsteps; ++i) {
    try {
      out.states.push_back(rk4_step(model, out.states.back(), order, h, frozen));
    } catch (const CausticError& e) {
      if (order == CorrectionOrder::order2) {
        out.aborted = true;
        out.last_valid_time = e.last_valid_time;
        out.abort_reason = e.what();
        return out;
      }
      // the jets hit a focal point; the canonical pair does not feed on
      // them below second order, so keep going with the jets frozen
      frozen = true;
      out.aux_frozen = true;
      out.aux_valid_time = e.last_valid_time;
      out.states.push_back(rk4_step(model, out.states.back(), order, h, true));
    }
  }
  out.last_valid_time = out.states.back().t;
  if (!out.aux_frozen) out.aux_valid_time = out.last_valid_time;

  if (estimate_error && nsteps > 0) {
    TrajectoryState s = start;
    try {
      for (long i = 0; i < 2 * nsteps; ++i)
        s = rk4_step(model, s, order, 0.5 * h, frozen);
      const TrajectoryState& f = out.states.back();
      out.step_error = std::max({std::abs(f.Q - s.Q), std::abs(f.P - s.P),
                                 std::abs(f.S - s.S)});
    } catch (const CausticError&) {
      out.step_error = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

SpecialCaseSolution::SpecialCaseSolution(const PerturbTable& pt, double K0,
                                         double S0_const, double A0_const, double c0,
                                         double c1)
    : pt_(&pt), K0_(K0), S0_(S0_const), A0c_(A0_const), c0_(c0), c1_(c1) {}

double SpecialCaseSolution::quad(const std::function<double(double)>& f, double t) const {
  if (t == 0.0) return 0.0;
  double err = 0.0;
  double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, 0.0, t, 12, 1e-13, &err);
  if (std::abs(err) > 1e-11 * std::max(1.0, std::abs(v)))
    throw std::runtime_error("SpecialCaseSolution: quadrature tolerance 1e-11 not met");
  return v;
}

double SpecialCaseSolution::b0(double t) const {
  const BandTable& b = pt_->band();
  return S0_ - quad([&](double s) { return b.energy(b1(s)); }, t) - c0_ * t;
}

double SpecialCaseSolution::S1(double t) const {
  const BandTable& b = pt_->band();
  return -quad([&](double s) { return b.berry(b1(s)) * c1_; }, t);
}

double SpecialCaseSolution::S2(double t) const {
  return -quad([&](double s) { return c1_ * c1_ * pt_->a1(b1(s)); }, t);
}

double SpecialCaseSolution::displacement(double t) const {
  const BandTable& b = pt_->band();
  return quad([&](double s) { return b.denergy(b1(s), 1); }, t);
}

}  // namespace bloch

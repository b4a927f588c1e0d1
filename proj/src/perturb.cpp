#include "bloch/perturb.hpp"

#include <cmath>

namespace bloch {

namespace {

VecR momentum_diagonal(double p, int M, double G) {
  VecR K(2 * M + 1);
  for (int i = 0; i <= 2 * M; ++i) K(i) = p + (i - M) * G;
  return K;
}

VecC applyK(const VecR& K, const VecC& v) { return VecC(K.array() * v.array()); }

}  // namespace

double AuxState::max_abs() const {
  double m = 0.0;
  for (double v : {p2, p3, p4, p5, l0, l1, l2, l3}) m = std::max(m, std::abs(v));
  return m;
}

VecC sternheimer_solve(const MatC& H, const BlochState& state, const VecC& r) {
  if (state.gap < 1e-8)
    throw NearDegeneracyError("sternheimer_solve: gap below 1e-8, solve ill-conditioned");
  const VecC& c = state.coeffs;
  MatC A = H;
  for (int i = 0; i < A.rows(); ++i) A(i, i) -= state.energy;
  A += c * c.adjoint();
  Eigen::PartialPivLU<MatC> lu(A);
  VecC w = deflated_solve(lu, c, r);
  VecC rp = r - c * c.dot(r);
  double res = (H * w - state.energy * w - rp).norm();
  if (res > 1e-10 * std::max(rp.norm(), 1e-30) && res > 1e-12)
    throw std::runtime_error("sternheimer_solve: residual " + std::to_string(res) +
                             " exceeds tolerance");
  return w;
}

PerturbTable::PerturbTable(const BandTable& band) : band_(&band) {
  const int Np = band.grid_size();
  const int M = band.cutoff();
  const double G = band.reciprocal();
  const int dim = 2 * M + 1;

  what_.resize(static_cast<size_t>(Np));
  dpwhat_.resize(static_cast<size_t>(Np));
  a1_.assign(static_cast<size_t>(Np), 0.0);
  N1_ = rX1_ = rX2_ = rX3_ = rKp_ = rKpp_ = rKppp_ = a1_;

  for (int j = 0; j < Np; ++j) {
    const double p = band.grid_point(j);
    const VecC& chi = band.chi(j);
    const VecC& y1 = band.dpchi(j);
    const VecC& y2 = band.dp2chi(j);
    const VecC& y3 = band.dp3chi(j);
    const double A0 = band.berry_grid()[static_cast<size_t>(j)];
    const double dA0 = band.dberry_grid()[static_cast<size_t>(j)];
    VecR K = momentum_diagonal(p, M, G);

    MatC H = assemble_hamiltonian(band.potential(), p, M);
    const double E = band.energies()[static_cast<size_t>(j)];
    MatC A = H;
    for (int i = 0; i < dim; ++i) A(i, i) -= E;
    A += chi * chi.adjoint();
    Eigen::PartialPivLU<MatC> lu(A);

    // (H - E) what = -i * (orthogonal part of dp chi)
    VecC y1perp = y1 - chi * chi.dot(y1);
    VecC wh = deflated_solve(lu, chi, VecC(-kImag * y1perp));
    what_[static_cast<size_t>(j)] = wh;
    ortho_residual_ = std::max(ortho_residual_, std::abs(chi.dot(wh)));

    // d/dp of the response equation:
    // (H - E) dpwhat = dp rhs - (K - dE1) what,  dp rhs = -i y2 + A0' chi + A0 y1
    VecC dprhs = -kImag * y2 + dA0 * chi + A0 * y1;
    const double dE1 = band.denergies(1)[static_cast<size_t>(j)];
    VecC rhs = dprhs - applyK(K, wh) + dE1 * wh;
    VecC dwp = deflated_solve(lu, chi, rhs);
    cx par = -y1.dot(wh);  // <chi, dp what> from d/dp <chi, what> = 0
    VecC dw = dwp + par * chi;
    dpwhat_[static_cast<size_t>(j)] = dw;

    a1_[static_cast<size_t>(j)] = (kImag * chi.dot(dw)).real();
    N1_[static_cast<size_t>(j)] = y1.squaredNorm();
    rX1_[static_cast<size_t>(j)] = chi.dot(y1).real();
    rX2_[static_cast<size_t>(j)] = chi.dot(y2).real();
    rX3_[static_cast<size_t>(j)] = chi.dot(y3).real();
    rKp_[static_cast<size_t>(j)] = chi.dot(applyK(K, y1)).real();
    rKpp_[static_cast<size_t>(j)] = chi.dot(applyK(K, y2)).real();
    rKppp_[static_cast<size_t>(j)] = chi.dot(applyK(K, y3)).real();
  }

  // spectral cross-check of the differentiated solve, and the torus
  // interpolants of both response tables
  {
    const int nt = dim * Np;
    const double torus_len = dim * G;
    const double k0 = band.grid_point(0) - M * G;
    std::vector<cx> u(static_cast<size_t>(nt)), ud(static_cast<size_t>(nt));
    for (int m = 0; m < dim; ++m)
      for (int j = 0; j < Np; ++j) {
        u[static_cast<size_t>(m * Np + j)] = what_[static_cast<size_t>(j)](m);
        ud[static_cast<size_t>(m * Np + j)] = dpwhat_[static_cast<size_t>(j)](m);
      }
    std::vector<cx> du = spectral_derivative(u, torus_len, 1);
    for (int j = 0; j < Np; ++j) {
      VecC ds(dim);
      for (int m = 0; m < dim; ++m) ds(m) = du[static_cast<size_t>(m * Np + j)];
      dpw_crosscheck_ =
          std::max(dpw_crosscheck_, (ds - dpwhat_[static_cast<size_t>(j)]).norm());
    }
    torus_what_ = TrigSeries(u, k0, torus_len);
    torus_dpwhat_ = TrigSeries(ud, k0, torus_len);
  }

  const double p0 = band.grid_point(0);
  i_a1_ = TrigSeries(a1_, p0, G);
  i_N1_ = TrigSeries(N1_, p0, G);
  i_rX1_ = TrigSeries(rX1_, p0, G);
  i_rX2_ = TrigSeries(rX2_, p0, G);
  i_rX3_ = TrigSeries(rX3_, p0, G);
  i_rKp_ = TrigSeries(rKp_, p0, G);
  i_rKpp_ = TrigSeries(rKpp_, p0, G);
  i_rKppp_ = TrigSeries(rKppp_, p0, G);
}

PerturbTable::PointData PerturbTable::compute_point(double p) const {
  const BandTable& b = *band_;
  const double pr = b.reduce(p);
  const int M = b.cutoff();
  const double G = b.reciprocal();
  const int dim = 2 * M + 1;

  VecC chi = b.chi_at(pr);
  BandPointData pd = compute_band_point(b.potential(), M, b.band_index(), pr, &chi,
                                        b.berry(pr), b.dberry(pr), b.d2berry(pr));
  VecR K = momentum_diagonal(pr, M, G);
  MatC H = assemble_hamiltonian(b.potential(), pr, M);
  MatC A = H;
  for (int i = 0; i < dim; ++i) A(i, i) -= pd.E;
  A += chi * chi.adjoint();
  Eigen::PartialPivLU<MatC> lu(A);

  VecC y1perp = pd.y1 - chi * chi.dot(pd.y1);
  VecC wh = deflated_solve(lu, chi, VecC(-kImag * y1perp));
  VecC dprhs = -kImag * pd.y2 + b.dberry(pr) * chi + b.berry(pr) * pd.y1;
  VecC rhs = dprhs - applyK(K, wh) + pd.dE.d1 * wh;
  VecC dw = deflated_solve(lu, chi, rhs) + (-pd.y1.dot(wh)) * chi;

  PointData out;
  out.what = wh;
  out.dpwhat = dw;
  out.s.a1 = (kImag * chi.dot(dw)).real();
  out.s.N1 = pd.y1.squaredNorm();
  out.s.rX1 = chi.dot(pd.y1).real();
  out.s.rX2 = chi.dot(pd.y2).real();
  out.s.rX3 = chi.dot(pd.y3).real();
  out.s.rKp = chi.dot(applyK(K, pd.y1)).real();
  out.s.rKpp = chi.dot(applyK(K, pd.y2)).real();
  out.s.rKppp = chi.dot(applyK(K, pd.y3)).real();
  return out;
}

VecC PerturbTable::what_at(double p) const {
  if (!band_->fast_path()) return compute_point(p).what;
  const int M = band_->cutoff();
  const double G = band_->reciprocal();
  VecC out(2 * M + 1);
  for (int m = 0; m <= 2 * M; ++m) out(m) = torus_what_.eval(p + (m - M) * G);
  return out;
}

VecC PerturbTable::dpwhat_at(double p) const {
  if (!band_->fast_path()) return compute_point(p).dpwhat;
  const int M = band_->cutoff();
  const double G = band_->reciprocal();
  VecC out(2 * M + 1);
  for (int m = 0; m <= 2 * M; ++m) out(m) = torus_dpwhat_.eval(p + (m - M) * G);
  return out;
}

double PerturbTable::a1(double p) const {
  return band_->fast_path() ? i_a1_.eval_real(p) : compute_point(p).s.a1;
}
double PerturbTable::n1(double p) const {
  return band_->fast_path() ? i_N1_.eval_real(p) : compute_point(p).s.N1;
}
double PerturbTable::rx1(double p) const {
  return band_->fast_path() ? i_rX1_.eval_real(p) : compute_point(p).s.rX1;
}
double PerturbTable::rx2(double p) const {
  return band_->fast_path() ? i_rX2_.eval_real(p) : compute_point(p).s.rX2;
}
double PerturbTable::rx3(double p) const {
  return band_->fast_path() ? i_rX3_.eval_real(p) : compute_point(p).s.rX3;
}
double PerturbTable::rkp(double p) const {
  return band_->fast_path() ? i_rKp_.eval_real(p) : compute_point(p).s.rKp;
}
double PerturbTable::rkpp(double p) const {
  return band_->fast_path() ? i_rKpp_.eval_real(p) : compute_point(p).s.rKpp;
}
double PerturbTable::rkppp(double p) const {
  return band_->fast_path() ? i_rKppp_.eval_real(p) : compute_point(p).s.rKppp;
}

PerturbTable::NodeScalars PerturbTable::node_scalars(int j) const {
  size_t k = static_cast<size_t>(j);
  return NodeScalars{a1_[k], N1_[k], rX1_[k], rX2_[k], rX3_[k], rKp_[k], rKpp_[k],
                     rKppp_[k]};
}

FirstOrderResult first_order(const PerturbTable& pt, double p, double U1) {
  FirstOrderResult r;
  r.E1 = pt.band().berry(p) * U1;
  r.w = U1 * pt.what_at(p);
  return r;
}

StaticSecondResult static_second_order(const PerturbTable& pt, double p, double U1,
                                       double U2) {
  StaticSecondResult r;
  const double a1 = pt.a1(p);
  r.A1 = U1 * a1;
  r.B = -0.5 * pt.rx2(p);
  r.Es2 = U1 * U1 * a1 + 0.5 * U2 * pt.n1(p);
  return r;
}

E2Basis e2_basis(const PerturbTable& pt, double p) {
  E2Basis b;
  EnergyDerivs d = pt.band().denergy_all(p);
  b.dE1 = d.d1;
  b.dE2 = d.d2;
  b.a1 = pt.a1(p);
  b.N1 = pt.n1(p);
  b.rX1 = pt.rx1(p);
  b.rX2 = pt.rx2(p);
  b.rX3 = pt.rx3(p);
  b.rKp = pt.rkp(p);
  b.rKpp = pt.rkpp(p);
  b.rKppp = pt.rkppp(p);
  return b;
}

E2Basis e2_basis_node(const PerturbTable& pt, int j) {
  E2Basis b;
  size_t k = static_cast<size_t>(j);
  b.dE1 = pt.band().denergies(1)[k];
  b.dE2 = pt.band().denergies(2)[k];
  PerturbTable::NodeScalars s = pt.node_scalars(j);
  b.a1 = s.a1;
  b.N1 = s.N1;
  b.rX1 = s.rX1;
  b.rX2 = s.rX2;
  b.rX3 = s.rX3;
  b.rKp = s.rKp;
  b.rKpp = s.rKpp;
  b.rKppp = s.rKppp;
  return b;
}

double e2_from_basis(const E2Basis& b, const AuxState& a, double U1, double U2) {
  const double hd1 = b.hd1(), hd2 = b.hd2(), hd3 = b.hd3();
  double e2 = U1 * U1 * b.a1;                     // static, slope part
  e2 += U2 * b.N1;                                // potential Hessian part
  e2 += -0.5 * (a.l2 + a.l1 * a.l1);              // amplitude Laplacian
  e2 += 0.5 * a.p2 * a.p2 * b.N1;                 // |P2 dpchi|^2
  e2 += a.l1 * (-0.5 * a.p2 * hd2 - a.l1 * hd1);  // L1 . Im<chi, D v>
  e2 += 0.5 * a.p2 * (1.0 - b.dE2) * (-0.5 * a.p2 * b.rX2);
  e2 += a.p2 * (-0.5 * a.p2 * hd3 - a.l1 * hd2);  // Im<chi, D P2 dp v>
  e2 += -0.5 * a.p3 * b.rKpp - a.l2 * b.rKp;      // Im<chi, K dx v>
  e2 += 0.5 * (a.p3 * b.dE1 + a.p2 * a.p2 * b.dE2 + U2) * b.rX2;
  return e2;
}

double forcing_from_basis(const E2Basis& b, const AuxState& a, double U1, double U2,
                          double U3) {
  const double hd1 = b.hd1(), hd2 = b.hd2(), hd3 = b.hd3();
  double f = 2.0 * U1 * U2 * b.a1;
  f += U3 * b.N1;
  f += -0.5 * (a.l3 + 2.0 * a.l1 * a.l2);
  f += a.p2 * a.p3 * b.N1;
  f += a.l2 * (-0.5 * a.p2 * hd2 - a.l1 * hd1);
  f += a.l1 * (-0.5 * a.p3 * hd2 - a.l2 * hd1);
  f += 0.5 * a.p3 * (1.0 - b.dE2) * (-0.5 * a.p2 * b.rX2) +
       0.5 * a.p2 * (1.0 - b.dE2) * (-0.5 * a.p3 * b.rX2);
  f += a.p3 * (-0.5 * a.p2 * hd3 - a.l1 * hd2) +
       a.p2 * (-0.5 * a.p3 * hd3 - a.l2 * hd2);
  f += -0.5 * a.p4 * b.rKpp - a.l3 * b.rKp;
  f += 0.5 * (a.p4 * b.dE1 + 2.0 * a.p2 * a.p3 * b.dE2 + U3) * b.rX2;
  return f;
}

double dynamic_second_order(const PerturbTable& pt, double p, const AuxState& aux,
                            double U1, double U2) {
  return e2_from_basis(e2_basis(pt, p), aux, U1, U2);
}

double forcing_term(const PerturbTable& pt, double p, const AuxState& aux, double U1,
                    double U2, double U3) {
  return forcing_from_basis(e2_basis(pt, p), aux, U1, U2, U3);
}

double wavepacket_energy(const PerturbTable& pt, double p, const AuxState& aux,
                         double U1, double U2) {
  StaticSecondResult s = static_second_order(pt, p, U1, U2);
  return dynamic_second_order(pt, p, aux, U1, U2) - s.Es2;
}

std::map<std::string, double> verify_identities(const PerturbTable& pt,
                                                const IdentityParams& ip) {
  const BandTable& b = pt.band();
  const int Np = b.grid_size();
  const int M = b.cutoff();
  const double G = b.reciprocal();

  // spectral route where the band is smooth over the closed zone, the
  // pointwise chain otherwise (a non-isolated edge breaks global spectra)
  std::vector<double> dE1id = b.fast_path() ? b.denergy1_spectral() : b.denergies(1);
  std::vector<double> dE2id =
      b.fast_path() ? spectral_derivative(b.denergies(1), G, 1) : b.denergies(2);

  std::map<std::string, double> res;
  auto upd = [&res](const std::string& k, double v) {
    auto it = res.find(k);
    if (it == res.end() || v > it->second) res[k] = v;
  };

  for (int j = 0; j < Np; ++j) {
    const double p = b.grid_point(j);
    const VecC& chi = b.chi(j);
    const VecC& y1 = b.dpchi(j);
    const VecC& y2 = b.dp2chi(j);
    const VecC& y3 = b.dp3chi(j);
    const VecC& wh = pt.what(j);
    const VecC& dwh = pt.dpwhat(j);
    VecR K = momentum_diagonal(p, M, G);
    const double A0 = b.berry_grid()[static_cast<size_t>(j)];
    const double dA0 = b.dberry_grid()[static_cast<size_t>(j)];
    const double d2A0 = b.d2berry_grid()[static_cast<size_t>(j)];
    const double dE1 = b.denergies(1)[static_cast<size_t>(j)];
    const cx X1 = chi.dot(y1);
    const cx X2 = chi.dot(y2);
    const cx X3 = chi.dot(y3);

    // group velocity bracket against the spectral derivative of the E table
    double vhf = 0.0;
    for (int i = 0; i <= 2 * M; ++i) vhf += K(i) * std::norm(chi(i));
    upd("group_velocity", std::abs(vhf - dE1id[static_cast<size_t>(j)]));

    // second-derivative bracket with a trial symmetric value s2
    {
      cx lhs = ip.s2 * (chi.dot(chi) + 2.0 * chi.dot(applyK(K, y1)));
      cx rhs = ip.s2 * dE2id[static_cast<size_t>(j)] + 2.0 * ip.s2 * dE1 * X1;
      upd("curvature_bracket", std::abs(lhs - rhs));
    }

    // d/dp of the first-order energy: <chi,K w> + <chi,H1 dp chi> =
    //   dp E1 + E1 <chi, dp chi>, stripped of the common dU factor
    cx velo_bracket = chi.dot(applyK(K, wh)) + kImag * X2 - dA0 + kImag * (A0 * A0);
    upd("first_order_velocity", std::abs(ip.U1 * velo_bracket));
    upd("first_order_mixed", std::abs(ip.U2 * velo_bracket));

    {
      cx lhs = ip.s2 * ip.U1 * chi.dot(wh) + 2.0 * ip.s2 * ip.U1 * chi.dot(applyK(K, dwh)) +
               kImag * ip.U1 * ip.s2 * X3;
      cx rhs = 2.0 * ip.s2 * dE1 * ip.U1 * chi.dot(dwh) + ip.s2 * ip.U1 * d2A0 +
               2.0 * ip.U1 * dA0 * ip.s2 * X1 + ip.U1 * A0 * ip.s2 * X2;
      upd("first_order_curvature", std::abs(lhs - rhs));
    }

    {
      const double E1v = A0 * ip.U1;
      VecC v = -0.5 * kImag * ip.s2 * y2 - kImag * ip.L1 * y1;
      cx lhs = 0.5 * kImag * ip.A0amp * E1v * ip.s2 * X2;
      cx rhs = -ip.A0amp * E1v * chi.dot(v) -
               kImag * E1v * (ip.A0amp * ip.L1) * X1;
      upd("amplitude_projection", std::abs(lhs - rhs));
    }

    {
      VecC dpv = -0.5 * kImag * ip.s2 * y3 - kImag * ip.L1 * y2;
      cx lhs = 0.5 * ip.A0amp * ip.U1 * ip.s2 * X3;
      cx rhs = kImag * ip.A0amp * chi.dot(dpv) * ip.U1 -
               (ip.A0amp * ip.L1) * X2 * ip.U1;
      upd("connection_projection", std::abs(lhs - rhs));
    }
  }
  return res;
}

ForcingReport forcing_term_report(const PerturbTable& pt, double p, const AuxState& a,
                                  double U1, double U2, double U3) {
  E2Basis b = e2_basis(pt, p);
  const double hd1 = b.hd1(), hd2 = b.hd2(), hd3 = b.hd3();
  const double m2 = -0.5 * a.p2 * b.rX2;  // Im<chi, -(i/2) P2 dp2chi>
  const double m3 = -0.5 * a.p3 * b.rX2;

  ForcingReport r;
  auto add = [&r](const std::string& n, double grad, double closed) {
    r.terms.push_back({n, grad, closed});
    r.gradient_total += grad;
    r.closed_form_total += closed;
  };
  add("slope_response", 2.0 * U1 * U2 * b.a1, 2.0 * U1 * U2 * b.a1);
  add("potential_third", U3 * b.N1, U3 * b.N1);
  add("amplitude", -0.5 * (a.l3 + 2.0 * a.l1 * a.l2), -0.5 * (a.l3 - 2.0 * a.l1 * a.l2));
  add("phase_hessian_cross", a.p2 * a.p3 * b.N1, a.p2 * a.p3 * b.N1);
  add("l2_transport", a.l2 * (-0.5 * a.p2 * hd2 - a.l1 * hd1),
      a.l2 * (-0.5 * a.p2 * hd2 - a.l1 * hd1));
  add("l1_transport", a.l1 * (-0.5 * a.p3 * hd2 - a.l2 * hd1),
      a.l1 * (-0.5 * a.p3 * hd2 - a.l2 * hd1));
  add("trace_curvature",
      0.5 * a.p3 * (1.0 - b.dE2) * m2 + 0.5 * a.p2 * (1.0 - b.dE2) * m3,
      0.5 * a.p3 * (1.0 - b.dE2) * m2);
  add("convective",
      a.p3 * (-0.5 * a.p2 * hd3 - a.l1 * hd2) + a.p2 * (-0.5 * a.p3 * hd3 - a.l2 * hd2),
      a.p3 * (-0.5 * a.p2 * hd3 - a.l1 * hd2) + a.p2 * (-0.5 * a.p3 * hd3 - a.l2 * hd2));
  add("fourth_jet", -0.5 * a.p4 * b.rKpp - a.l3 * b.rKp,
      -0.5 * a.p4 * hd2 - a.l3 * hd1);
  add("time_derivative", 0.5 * (a.p4 * b.dE1 + 2.0 * a.p2 * a.p3 * b.dE2 + U3) * b.rX2,
      0.5 * (a.p4 * b.dE1 + 2.0 * a.p2 * a.p3 * b.dE2 + U3) * b.rX2);
  return r;
}

}  // namespace bloch

#include "bloch/band.hpp"

#include <algorithm>
#include <cmath>

namespace bloch {

namespace {

// Deterministic overall phase: largest-|c| entry made real positive.
void canonical_phase(VecC& c) {
  int imax = 0;
  double best = -1.0;
  for (int i = 0; i < c.size(); ++i) {
    double a = std::abs(c(i));
    if (a > best + 1e-15) {
      best = a;
      imax = i;
    }
  }
  cx v = c(imax);
  if (std::abs(v) > 0.0) c *= std::conj(v) / std::abs(v);
}

// Continuation of an eigenvector across the zone boundary: coefficients shift
// by one reciprocal index, chi(z, p+G) = exp(-iGz) chi(z, p).
VecC shift_up(const VecC& c) {
  VecC out = VecC::Zero(c.size());
  for (int m = 0; m + 1 < c.size(); ++m) out(m) = c(m + 1);
  return out;
}

VecC shift_by(const VecC& c, int s) {
  VecC out = VecC::Zero(c.size());
  for (int m = 0; m < c.size(); ++m) {
    int src = m + s;
    if (src >= 0 && src < c.size()) out(m) = c(src);
  }
  return out;
}

VecR momentum_diagonal(double p, int M, double G) {
  VecR K(2 * M + 1);
  for (int i = 0; i <= 2 * M; ++i) K(i) = p + (i - M) * G;
  return K;
}

}  // namespace

double EnergyDerivs::get(int order) const {
  switch (order) {
    case 1: return d1;
    case 2: return d2;
    case 3: return d3;
    case 4: return d4;
    case 5: return d5;
    default: throw std::invalid_argument("EnergyDerivs: order must be 1..5");
  }
}

MatC assemble_hamiltonian(const PeriodicPotential& V, double p, int M) {
  if (M < 1) throw std::invalid_argument("assemble_hamiltonian: M >= 1 required");
  const double G = V.lattice().reciprocal();
  const int dim = 2 * M + 1;
  MatC H = MatC::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    double k = p + (i - M) * G;
    H(i, i) = 0.5 * k * k + V.fourier(0).real();
    for (int j = i + 1; j < dim; ++j) {
      cx v = V.fourier(i - j);
      H(i, j) = v;
      H(j, i) = std::conj(v);
    }
  }
  return H;
}

BlochState solve_band(const MatC& H, int n, double p, double G) {
  const int dim = static_cast<int>(H.rows());
  if (n < 1 || n > dim) throw std::invalid_argument("solve_band: band index out of range");
  Eigen::SelfAdjointEigenSolver<MatC> es(H);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("solve_band: eigendecomposition failed");
  BlochState s;
  s.p = p;
  s.n = n;
  s.cutoff = (dim - 1) / 2;
  s.reciprocal = G;
  s.energy = es.eigenvalues()(n - 1);
  s.coeffs = es.eigenvectors().col(n - 1);
  canonical_phase(s.coeffs);
  s.gap = std::numeric_limits<double>::infinity();
  for (int m = 0; m < dim; ++m)
    if (m != n - 1) s.gap = std::min(s.gap, std::abs(es.eigenvalues()(m) - s.energy));
  s.residual = (H * s.coeffs - s.energy * s.coeffs).norm();
  if (s.residual > 1e-10 * (std::abs(s.energy) + 1.0))
    throw std::runtime_error("solve_band: eigenpair residual too large");
  return s;
}

BlochState solve_band(const PeriodicPotential& V, double p, int M, int n) {
  return solve_band(assemble_hamiltonian(V, p, M), n, p, V.lattice().reciprocal());
}

double group_velocity_hf(const BlochState& state) {
  const int M = state.cutoff;
  double v = 0.0;
  for (int i = 0; i <= 2 * M; ++i)
    v += (state.p + (i - M) * state.reciprocal) * std::norm(state.coeffs(i));
  return v;
}

GaugeFixResult fix_gauge(const std::vector<BlochState>& states) {
  const int N = static_cast<int>(states.size());
  if (N < 2) throw std::invalid_argument("fix_gauge: need at least two states");
  GaugeFixResult out;
  out.coeffs.reserve(states.size());
  for (const auto& s : states) out.coeffs.push_back(s.coeffs);

  canonical_phase(out.coeffs[0]);
  for (int j = 1; j < N; ++j) {
    cx o = out.coeffs[static_cast<size_t>(j - 1)].dot(out.coeffs[static_cast<size_t>(j)]);
    out.min_overlap = std::min(out.min_overlap, std::abs(o));
    if (std::abs(o) < 0.9)
      throw std::runtime_error("fix_gauge: consecutive overlap below 0.9; refine p_grid");
    out.coeffs[static_cast<size_t>(j)] *= std::conj(o) / std::abs(o);
  }
  VecC wrap = shift_up(out.coeffs[0]);
  cx oN = out.coeffs[static_cast<size_t>(N - 1)].dot(wrap);
  if (std::abs(oN) < 0.5) {
    // the band does not connect across the boundary (degenerate edge);
    // leave the transported gauge untwisted
    out.closable = false;
    out.zak_phase = 0.0;
    out.closure_defect = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.min_overlap = std::min(out.min_overlap, std::abs(oN));

  // Zak phase from the Wilson loop; interior factors are real positive here.
  out.zak_phase = -std::arg(oN);
  for (int j = 0; j < N; ++j)
    out.coeffs[static_cast<size_t>(j)] *=
        std::exp(-kImag * (out.zak_phase * static_cast<double>(j) / N));

  wrap = shift_up(out.coeffs[0]);
  cx oNt = out.coeffs[static_cast<size_t>(N - 1)].dot(wrap);
  out.closure_defect = std::abs(std::arg(oNt * std::exp(kImag * (out.zak_phase / N))));
  return out;
}

VecC deflated_solve(const Eigen::PartialPivLU<MatC>& lu, const VecC& c, const VecC& r) {
  VecC rp = r - c * c.dot(r);
  VecC y = lu.solve(rp);
  y -= c * c.dot(y);
  return y;
}

BandPointData compute_band_point(const PeriodicPotential& V, int M, int n, double p,
                                 const VecC* gauge_chi, double A0, double dA0,
                                 double d2A0) {
  const double G = V.lattice().reciprocal();
  MatC H = assemble_hamiltonian(V, p, M);
  BlochState s = solve_band(H, n, p, G);
  if (s.near_degenerate())
    throw NearDegeneracyError("compute_band_point: eigenvalue gap below 1e-8 at p=" +
                              std::to_string(p));
  BandPointData out;
  out.E = s.energy;
  out.chi = gauge_chi ? *gauge_chi : s.coeffs;
  const VecC& chi = out.chi;
  const int dim = 2 * M + 1;
  VecR K = momentum_diagonal(p, M, G);

  MatC A = H;
  for (int i = 0; i < dim; ++i) A(i, i) -= s.energy;
  A += chi * chi.adjoint();
  Eigen::PartialPivLU<MatC> lu(A);

  auto applyK = [&](const VecC& v) { return VecC(K.array() * v.array()); };

  const double E1 = chi.dot(applyK(chi)).real();
  VecC y1p = deflated_solve(lu, chi, VecC(E1 * chi - applyK(chi)));
  VecC y1 = y1p - kImag * A0 * chi;

  const double E2 = 1.0 + 2.0 * (chi.dot(applyK(y1)) - E1 * chi.dot(y1)).real();

  VecC rhs2 = (E2 - 1.0) * chi + 2.0 * (E1 * y1 - applyK(y1));
  VecC y2p = deflated_solve(lu, chi, rhs2);
  cx n2 = -y1.squaredNorm() - kImag * dA0;
  VecC y2 = y2p + n2 * chi;

  cx bK2 = chi.dot(applyK(y2)) - E1 * chi.dot(y2);
  const double E3 = (3.0 * bK2 - 3.0 * (E2 - 1.0) * chi.dot(y1)).real();

  VecC rhs3 = E3 * chi + 3.0 * (E2 - 1.0) * y1 + 3.0 * (E1 * y2 - applyK(y2));
  VecC y3p = deflated_solve(lu, chi, rhs3);
  cx y1y2 = y1.dot(y2);
  cx n3 = -2.0 * y1y2.real() - y1y2 - kImag * d2A0;
  VecC y3 = y3p + n3 * chi;

  cx bK3 = chi.dot(applyK(y3)) - E1 * chi.dot(y3);
  const double E4 =
      (4.0 * bK3 - 4.0 * E3 * chi.dot(y1) - 6.0 * (E2 - 1.0) * chi.dot(y2)).real();

  VecC rhs4 = E4 * chi + 4.0 * E3 * y1 + 6.0 * (E2 - 1.0) * y2 +
              4.0 * (E1 * y3 - applyK(y3));
  VecC y4p = deflated_solve(lu, chi, rhs4);
  cx bK4 = chi.dot(applyK(y4p)) - E1 * chi.dot(y4p);
  const double E5 = (5.0 * bK4 - 5.0 * E4 * chi.dot(y1) - 10.0 * E3 * chi.dot(y2) -
                     10.0 * (E2 - 1.0) * chi.dot(y3))
                        .real();

  out.dE = EnergyDerivs{E1, E2, E3, E4, E5};
  out.y1 = y1;
  out.y2 = y2;
  out.y3 = y3;
  return out;
}

BandTable::BandTable(const PeriodicPotential& V, int n, int Np, int M)
    : V_(V), n_(n), Np_(Np), M_(M) {
  if (Np < 8) throw std::invalid_argument("BandTable: N_p >= 8 required");
  const double G = V.lattice().reciprocal();
  dp_ = G / Np;
  // half-offset grid keeps zone-edge degeneracies between nodes
  p_first_ = -0.5 * G + 0.5 * dp_;

  std::vector<BlochState> states;
  states.reserve(static_cast<size_t>(Np));
  min_gap_ = std::numeric_limits<double>::infinity();
  for (int j = 0; j < Np; ++j) {
    states.push_back(solve_band(V_, grid_point(j), M, n));
    const BlochState& s = states.back();
    if (s.near_degenerate())
      throw NearDegeneracyError("BandTable: band " + std::to_string(n) +
                                " not isolated at p=" + std::to_string(s.p));
    min_gap_ = std::min(min_gap_, s.gap);
    max_residual_ = std::max(max_residual_, s.residual);
    E_.push_back(s.energy);
    gap_.push_back(s.gap);
  }
  isolation_margin_ = min_gap_;
  // a crossing strictly inside the zone breaks the single-band construction;
  // a closing gap at the zone edge only disables the smooth-table fast path
  const double gap_center = solve_band(V_, 0.0, M, n).gap;
  if (gap_center < 1e-8)
    throw NearDegeneracyError("BandTable: band " + std::to_string(n) +
                              " degenerate at p=0");
  isolation_margin_ = std::min(isolation_margin_, gap_center);
  isolation_margin_ = std::min(isolation_margin_, solve_band(V_, 0.5 * G, M, n).gap);
  GaugeFixResult g = fix_gauge(states);
  chi_ = std::move(g.coeffs);
  zak_ = g.zak_phase;
  closure_defect_ = g.closure_defect;
  if (g.closable) flatten_connection();
  build_derived();
}

std::vector<double> BandTable::connection_samples() const {
  const double G = V_.lattice().reciprocal();
  const int dim = 2 * M_ + 1;
  const int nt = dim * Np_;
  std::vector<cx> u(static_cast<size_t>(nt));
  for (int m = 0; m < dim; ++m)
    for (int j = 0; j < Np_; ++j)
      u[static_cast<size_t>(m * Np_ + j)] = chi_[static_cast<size_t>(j)](m);
  std::vector<cx> du = spectral_derivative(u, dim * G, 1);
  std::vector<double> A0(static_cast<size_t>(Np_));
  for (int j = 0; j < Np_; ++j) {
    cx b = 0.0;
    for (int m = 0; m < dim; ++m)
      b += std::conj(chi_[static_cast<size_t>(j)](m)) * du[static_cast<size_t>(m * Np_ + j)];
    A0[static_cast<size_t>(j)] = -b.imag();
  }
  return A0;
}

// Gauge target: the connection follows the intracell center of the cell
// density, A0(p) = zak/G + (<z>_p - mean <z>). The transported gauge carries
// the Zak phase as a uniform connection plus grid ripple; re-phasing towards
// the target keeps the gauge smooth (spectral derivatives stay clean) while
// giving the connection its physical p-profile.
void BandTable::flatten_connection() {
  const double G = V_.lattice().reciprocal();
  const double a = V_.lattice().period;
  const int dim = 2 * M_ + 1;

  // intracell center <z> on [0, a): diagonal a/2, off-diagonal a/(i 2 pi dm)
  std::vector<double> target(static_cast<size_t>(Np_));
  double zmean = 0.0;
  for (int j = 0; j < Np_; ++j) {
    const VecC& c = chi_[static_cast<size_t>(j)];
    cx z = 0.5 * a;
    for (int m = 0; m < dim; ++m)
      for (int mp = 0; mp < dim; ++mp) {
        if (m == mp) continue;
        z += std::conj(c(m)) * c(mp) * (a / (kImag * (kTwoPi * (mp - m))));
      }
    target[static_cast<size_t>(j)] = z.real();
    zmean += z.real();
  }
  zmean /= Np_;
  for (double& t : target) t -= zmean;  // loop integral stays at the Zak phase

  for (int iter = 0; iter < 4; ++iter) {
    std::vector<double> A0 = connection_samples();
    double mean = 0.0;
    for (double v : A0) mean += v;
    mean /= Np_;
    double worst = 0.0;
    for (int j = 0; j < Np_; ++j)
      worst = std::max(worst,
                       std::abs(A0[static_cast<size_t>(j)] - mean - target[static_cast<size_t>(j)]));
    if (worst < 1e-13) break;
    // re-phase: chi -> exp(i phi) chi shifts the connection by -phi'
    std::vector<cx> delta(static_cast<size_t>(Np_));
    for (int j = 0; j < Np_; ++j)
      delta[static_cast<size_t>(j)] =
          A0[static_cast<size_t>(j)] - mean - target[static_cast<size_t>(j)];
    std::vector<cx> spec = fft(delta);
    for (int k = 0; k < Np_; ++k) {
      int f = signed_freq(k, Np_);
      if (f == 0 || (Np_ % 2 == 0 && k == Np_ / 2)) {
        spec[static_cast<size_t>(k)] = 0.0;
        continue;
      }
      spec[static_cast<size_t>(k)] /= kImag * (kTwoPi * f / G);
    }
    std::vector<cx> phi = ifft(spec);
    for (int j = 0; j < Np_; ++j)
      chi_[static_cast<size_t>(j)] *= std::exp(kImag * phi[static_cast<size_t>(j)].real());
  }
}

void BandTable::build_derived() {
  const double G = V_.lattice().reciprocal();
  const int dim = 2 * M_ + 1;
  const int nt = dim * Np_;
  const double torus_len = dim * G;

  auto torus_pack = [&](const std::vector<VecC>& table) {
    std::vector<cx> u(static_cast<size_t>(nt));
    for (int m = 0; m < dim; ++m)
      for (int j = 0; j < Np_; ++j)
        u[static_cast<size_t>(m * Np_ + j)] = table[static_cast<size_t>(j)](m);
    return u;
  };
  auto torus_unpack = [&](const std::vector<cx>& u) {
    std::vector<VecC> table(static_cast<size_t>(Np_), VecC::Zero(dim));
    for (int m = 0; m < dim; ++m)
      for (int j = 0; j < Np_; ++j)
        table[static_cast<size_t>(j)](m) = u[static_cast<size_t>(m * Np_ + j)];
    return table;
  };

  std::vector<cx> uchi = torus_pack(chi_);
  std::vector<cx> ud1 = spectral_derivative(uchi, torus_len, 1);
  std::vector<VecC> dpchi_spec = torus_unpack(ud1);

  A0_.assign(static_cast<size_t>(Np_), 0.0);
  berry_real_residual_ = 0.0;
  for (int j = 0; j < Np_; ++j) {
    cx b = chi_[static_cast<size_t>(j)].dot(dpchi_spec[static_cast<size_t>(j)]);
    A0_[static_cast<size_t>(j)] = -b.imag();
    berry_real_residual_ = std::max(berry_real_residual_, std::abs(b.real()));
  }
  dA0_ = spectral_derivative(A0_, G, 1);
  d2A0_ = spectral_derivative(A0_, G, 2);

  const bool keep_energy = !dE_.empty();
  if (!keep_energy) dE_.assign(5, std::vector<double>(static_cast<size_t>(Np_), 0.0));
  dpchi_.assign(static_cast<size_t>(Np_), VecC());
  dp2chi_.assign(static_cast<size_t>(Np_), VecC());
  dp3chi_.assign(static_cast<size_t>(Np_), VecC());
  dpchi_crosscheck_ = 0.0;
  for (int j = 0; j < Np_; ++j) {
    BandPointData pd =
        compute_band_point(V_, M_, n_, grid_point(j), &chi_[static_cast<size_t>(j)],
                           A0_[static_cast<size_t>(j)], dA0_[static_cast<size_t>(j)],
                           d2A0_[static_cast<size_t>(j)]);
    if (!keep_energy) {
      dE_[0][static_cast<size_t>(j)] = pd.dE.d1;
      dE_[1][static_cast<size_t>(j)] = pd.dE.d2;
      dE_[2][static_cast<size_t>(j)] = pd.dE.d3;
      dE_[3][static_cast<size_t>(j)] = pd.dE.d4;
      dE_[4][static_cast<size_t>(j)] = pd.dE.d5;
    }
    dpchi_[static_cast<size_t>(j)] = pd.y1;
    dp2chi_[static_cast<size_t>(j)] = pd.y2;
    dp3chi_[static_cast<size_t>(j)] = pd.y3;
    const VecC& c = chi_[static_cast<size_t>(j)];
    VecC spec_perp =
        dpchi_spec[static_cast<size_t>(j)] - c * c.dot(dpchi_spec[static_cast<size_t>(j)]);
    VecC y1perp = pd.y1 - c * c.dot(pd.y1);
    dpchi_crosscheck_ = std::max(dpchi_crosscheck_, (spec_perp - y1perp).norm());
  }

  std::vector<cx> u1 = torus_pack(dpchi_);
  std::vector<cx> u2 = torus_pack(dp2chi_);
  std::vector<cx> u3 = torus_pack(dp3chi_);

  if (dE1_spec_.empty()) dE1_spec_ = spectral_derivative(E_, G, 1);

  interp_E_ = TrigSeries(E_, p_first_, G);
  interp_dE_.clear();
  for (int k = 0; k < 5; ++k)
    interp_dE_.emplace_back(dE_[static_cast<size_t>(k)], p_first_, G);
  interp_A0_ = TrigSeries(A0_, p_first_, G);
  interp_dA0_ = TrigSeries(dA0_, p_first_, G);
  interp_d2A0_ = TrigSeries(d2A0_, p_first_, G);
  const double k0 = p_first_ - M_ * G;  // torus coordinate of sample 0
  torus_chi_ = TrigSeries(uchi, k0, torus_len);
  torus_dpchi_ = TrigSeries(u1, k0, torus_len);
  torus_dp2chi_ = TrigSeries(u2, k0, torus_len);
  torus_dp3chi_ = TrigSeries(u3, k0, torus_len);

  fast_path_ = isolation_margin_ >= 1e-2;
}

const std::vector<double>& BandTable::denergies(int order) const {
  if (order < 1 || order > 5)
    throw std::invalid_argument("BandTable::denergies: order must be 1..5");
  return dE_[static_cast<size_t>(order - 1)];
}

double BandTable::reduce(double p) const {
  const double G = reciprocal();
  const double w0 = p_first_ - 0.5 * dp_;
  return p - G * std::floor((p - w0) / G);
}

int BandTable::nearest_node(double p) const {
  double pr = reduce(p);
  int j = static_cast<int>(std::floor((pr - p_first_) / dp_ + 0.5));
  if (j < 0) j = 0;
  if (j >= Np_) j = Np_ - 1;
  return j;
}

double BandTable::energy(double p) const {
  if (fast_path_) return interp_E_.eval_real(p);
  return solve_band(V_, reduce(p), M_, n_).energy;
}

double BandTable::denergy(double p, int order) const {
  if (order < 1 || order > 5)
    throw std::invalid_argument("BandTable::denergy: order must be 1..5");
  if (fast_path_) return interp_dE_[static_cast<size_t>(order - 1)].eval_real(p);
  return denergy_all(p).get(order);
}

EnergyDerivs BandTable::denergy_all(double p) const {
  if (fast_path_) {
    EnergyDerivs d;
    d.d1 = interp_dE_[0].eval_real(p);
    d.d2 = interp_dE_[1].eval_real(p);
    d.d3 = interp_dE_[2].eval_real(p);
    d.d4 = interp_dE_[3].eval_real(p);
    d.d5 = interp_dE_[4].eval_real(p);
    return d;
  }
  double pr = reduce(p);
  BandPointData pd = compute_band_point(V_, M_, n_, pr, nullptr, berry(pr), dberry(pr),
                                        d2berry(pr));
  return pd.dE;
}

double BandTable::berry(double p) const { return interp_A0_.eval_real(p); }
double BandTable::dberry(double p) const { return interp_dA0_.eval_real(p); }
double BandTable::d2berry(double p) const { return interp_d2A0_.eval_real(p); }

VecC BandTable::vector_at(double p, const TrigSeries& torus, int which) const {
  const double G = reciprocal();
  const int dim = 2 * M_ + 1;
  if (fast_path_) {
    VecC out(dim);
    for (int m = 0; m < dim; ++m) out(m) = torus.eval(p + (m - M_) * G);
    return out;
  }
  const double pr = reduce(p);
  const int s = static_cast<int>(std::lround((p - pr) / G));
  VecC base;
  if (which == 0) {
    BlochState st = solve_band(V_, pr, M_, n_);
    const VecC& ref = chi_[static_cast<size_t>(nearest_node(pr))];
    cx o = ref.dot(st.coeffs);
    if (std::abs(o) < 0.5)
      throw std::runtime_error("BandTable: cannot align interpolated state to gauge");
    st.coeffs *= std::conj(o) / std::abs(o);
    base = st.coeffs;
  } else {
    VecC chi;
    {
      BlochState st = solve_band(V_, pr, M_, n_);
      const VecC& ref = chi_[static_cast<size_t>(nearest_node(pr))];
      cx o = ref.dot(st.coeffs);
      if (std::abs(o) < 0.5)
        throw std::runtime_error("BandTable: cannot align interpolated state to gauge");
      st.coeffs *= std::conj(o) / std::abs(o);
      chi = st.coeffs;
    }
    BandPointData pd =
        compute_band_point(V_, M_, n_, pr, &chi, berry(pr), dberry(pr), d2berry(pr));
    base = which == 1 ? pd.y1 : (which == 2 ? pd.y2 : pd.y3);
  }
  return s == 0 ? base : shift_by(base, s);
}

VecC BandTable::chi_at(double p) const { return vector_at(p, torus_chi_, 0); }
VecC BandTable::dpchi_at(double p) const { return vector_at(p, torus_dpchi_, 1); }
VecC BandTable::dp2chi_at(double p) const { return vector_at(p, torus_dp2chi_, 2); }
VecC BandTable::dp3chi_at(double p) const { return vector_at(p, torus_dp3chi_, 3); }

BandTable BandTable::twisted(const std::function<double(double)>& zeta) const {
  BandTable t;
  t.V_ = V_;
  t.n_ = n_;
  t.Np_ = Np_;
  t.M_ = M_;
  t.p_first_ = p_first_;
  t.dp_ = dp_;
  t.E_ = E_;
  t.dE_ = dE_;  // gauge-free, kept verbatim
  t.dE1_spec_ = dE1_spec_;
  t.gap_ = gap_;
  t.zak_ = zak_;  // loop integral of the connection is unchanged mod 2*pi
  t.min_gap_ = min_gap_;
  t.isolation_margin_ = isolation_margin_;
  t.closure_defect_ = closure_defect_;
  t.max_residual_ = max_residual_;
  t.chi_ = chi_;
  for (int j = 0; j < Np_; ++j)
    t.chi_[static_cast<size_t>(j)] *= std::exp(kImag * zeta(grid_point(j)));
  t.build_derived();
  return t;
}

}  // namespace bloch

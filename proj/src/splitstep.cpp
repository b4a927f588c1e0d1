#include "bloch/splitstep.hpp"

#include <cmath>

namespace bloch {

namespace {

double wavenumber(int k, int n, double L) {
  return kTwoPi * signed_freq(k, n) / L;
}

// two-pass periodic center: circular mean, then a linear mean in the frame
// centered on it (unwrapped coordinate)
double periodic_center(const Wavefield& psi) {
  const int N = psi.grid.n;
  const double L = psi.grid.length();
  cx zbar = 0.0;
  double total = 0.0;
  for (int j = 0; j < N; ++j) {
    double w = std::norm(psi.values[static_cast<size_t>(j)]);
    double theta = kTwoPi * (psi.grid.point(j) - psi.grid.xmin) / L;
    zbar += w * std::exp(kImag * theta);
    total += w;
  }
  if (total <= 0.0) throw std::runtime_error("center: zero mass");
  double frac = std::arg(zbar / total) / kTwoPi;
  frac -= std::floor(frac);
  double guess = psi.grid.xmin + L * frac;
  double acc = 0.0;
  for (int j = 0; j < N; ++j) {
    double w = std::norm(psi.values[static_cast<size_t>(j)]);
    double d = psi.grid.point(j) - guess;
    d -= L * std::round(d / L);
    acc += w * d;
  }
  return guess + acc / total;
}

}  // namespace

Observables observables(const Wavefield& psi, const PeriodicPotential& V,
                        const ExternalPotential& U) {
  const int N = psi.grid.n;
  const double dx = psi.grid.dx();
  const double L = psi.grid.length();
  const double eps = psi.epsilon;

  Observables o;
  o.mass = psi.mass();
  if (o.mass < 1e-14) throw std::runtime_error("observables: mass below 1e-14");

  std::vector<cx> spec = fft(psi.values);
  double kin = 0.0, mom = 0.0, specnorm = 0.0;
  for (int k = 0; k < N; ++k) {
    double kk = wavenumber(k, N, L);
    double w = std::norm(spec[static_cast<size_t>(k)]);
    kin += 0.5 * eps * eps * kk * kk * w;
    mom += eps * kk * w;
    specnorm += w;
  }
  double pot = 0.0;
  for (int j = 0; j < N; ++j) {
    double x = psi.grid.point(j);
    pot += (V.eval(x / eps) + U.derivative(x, 0)) * std::norm(psi.values[static_cast<size_t>(j)]);
  }
  o.energy = (kin / specnorm * o.mass + pot * dx) / o.mass;
  o.momentum = mom / specnorm;
  o.center = periodic_center(psi);
  return o;
}

EvolveRecord split_step_evolve(const Wavefield& psi0, const PeriodicPotential& V,
                               const ExternalPotential& U, const EvolveConfig& cfg,
                               bool keep_fields) {
  const double eps = psi0.epsilon;
  validate_grid(psi0.grid, eps, V.lattice().period);
  const int N = psi0.grid.n;
  const double L = psi0.grid.length();
  const double dt = cfg.dt > 0.0 ? cfg.dt : eps / 200.0;
  const long nsteps = std::lround(cfg.T / dt);
  const double h = nsteps > 0 ? cfg.T / static_cast<double>(nsteps) : dt;

  if (cfg.check_tail) {
    // the packet tail must not touch the periodic boundary
    const int edge = std::max(2, N / 50);
    double tail = 0.0, total = 0.0;
    for (int j = 0; j < N; ++j) {
      double w = std::norm(psi0.values[static_cast<size_t>(j)]);
      total += w;
      if (j < edge || j >= N - edge) tail += w;
    }
    if (total > 0.0 && tail / total > 1e-10)
      throw std::runtime_error("split_step_evolve: initial tail mass at boundary; widen box");
  }

  std::vector<cx> half_v(static_cast<size_t>(N)), kin(static_cast<size_t>(N));
  for (int j = 0; j < N; ++j) {
    double x = psi0.grid.point(j);
    double w = V.eval(x / eps) + U.derivative(x, 0);
    half_v[static_cast<size_t>(j)] = std::exp(-kImag * (w * h / (2.0 * eps)));
  }
  for (int k = 0; k < N; ++k) {
    double kk = wavenumber(k, N, L);
    kin[static_cast<size_t>(k)] = std::exp(-kImag * (eps * kk * kk * h / 2.0));
  }

  EvolveRecord rec;
  Wavefield psi = psi0;
  const double mass0 = psi.mass();
  auto record = [&](double t) {
    psi.time = t;
    rec.times.push_back(t);
    rec.obs.push_back(observables(psi, V, U));
    if (keep_fields) rec.snapshots.push_back(psi);
    rec.max_mass_drift =
        std::max(rec.max_mass_drift, std::abs(psi.mass() - mass0) / mass0);
  };
  record(0.0);

  for (long i = 0; i < nsteps; ++i) {
    for (int j = 0; j < N; ++j) psi.values[static_cast<size_t>(j)] *= half_v[static_cast<size_t>(j)];
    std::vector<cx> spec = fft(psi.values);
    for (int k = 0; k < N; ++k) spec[static_cast<size_t>(k)] *= kin[static_cast<size_t>(k)];
    psi.values = ifft(spec);
    for (int j = 0; j < N; ++j) psi.values[static_cast<size_t>(j)] *= half_v[static_cast<size_t>(j)];
    const double t = (i + 1) * h;
    const bool last = i + 1 == nsteps;
    if (last || (cfg.record_every > 0 && (i + 1) % cfg.record_every == 0)) record(t);
  }
  return rec;
}

double wkb_error(const Wavefield& psi, const Wavefield& psi_w, int s) {
  if (!(psi.grid == psi_w.grid))
    throw std::invalid_argument("wkb_error: grids differ");
  if (s != 0 && s != 1) throw std::invalid_argument("wkb_error: s must be 0 or 1");
  const int N = psi.grid.n;
  const double dx = psi.grid.dx();
  std::vector<cx> diff(static_cast<size_t>(N));
  for (int j = 0; j < N; ++j)
    diff[static_cast<size_t>(j)] =
        psi.values[static_cast<size_t>(j)] - psi_w.values[static_cast<size_t>(j)];

  double l2 = 0.0;
  for (const cx& v : diff) l2 += std::norm(v);
  l2 = std::sqrt(l2 * dx);
  if (s == 0) return l2;

  std::vector<cx> dd = spectral_derivative(diff, psi.grid.length(), 1);
  double dnorm = 0.0, xnorm = 0.0;
  for (int j = 0; j < N; ++j) {
    dnorm += std::norm(psi.epsilon * dd[static_cast<size_t>(j)]);
    xnorm += std::norm(psi.grid.point(j) * diff[static_cast<size_t>(j)]);
  }
  return l2 + std::sqrt(dnorm * dx) + std::sqrt(xnorm * dx);
}

}  // namespace bloch

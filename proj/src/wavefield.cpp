#include "bloch/wavefield.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "json.hpp"

namespace bloch {

namespace {

// chi(z, p) = sum_m c_m exp(i m G z)
cx synthesize(const VecC& c, int M, double G, double z) {
  cx s = 0.0;
  for (int m = -M; m <= M; ++m) s += c(m + M) * std::exp(kImag * (m * G * z));
  return s;
}

}  // namespace

double Wavefield::mass() const {
  double s = 0.0;
  for (const cx& v : values) s += std::norm(v);
  return s * grid.dx();
}

void validate_grid(const SpatialGrid& grid, double eps, double period) {
  if (grid.n < 8 || (grid.n & (grid.n - 1)) != 0)
    throw std::invalid_argument("grid: point count must be a power of two >= 8");
  if (!(grid.xmax > grid.xmin)) throw std::invalid_argument("grid: empty extent");
  if (grid.dx() > eps * period / 8.0 * (1.0 + 1e-12))
    throw std::invalid_argument("grid too coarse for eps: need dx <= eps*a/8");
}

Wavefield build_initial_data(const RealFn& aI, const RealFn& phiI, const RealFn& dphiI,
                             const BandTable& band, double eps, const SpatialGrid& grid) {
  validate_grid(grid, eps, band.lattice().period);
  const double G = band.reciprocal();
  const int M = band.cutoff();
  Wavefield psi;
  psi.grid = grid;
  psi.epsilon = eps;
  psi.values.resize(static_cast<size_t>(grid.n));

  // cache chi coefficients per distinct momentum value
  std::map<double, VecC> cache;
  for (int j = 0; j < grid.n; ++j) {
    const double x = grid.point(j);
    const double a = aI(x);
    if (a == 0.0) {
      psi.values[static_cast<size_t>(j)] = 0.0;
      continue;
    }
    const double p = dphiI(x);
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, band.chi_at(p)).first;
    cx chi = synthesize(it->second, M, G, x / eps);
    psi.values[static_cast<size_t>(j)] = a * chi * std::exp(kImag * (phiI(x) / eps));
  }
  return psi;
}

Wavefield build_prepared_initial_data(const RealFn& aI, const RealFn& daI, double K0,
                                      const ExternalPotential& U,
                                      const PerturbTable& pt, double eps,
                                      const SpatialGrid& grid) {
  const BandTable& band = pt.band();
  validate_grid(grid, eps, band.lattice().period);
  const double G = band.reciprocal();
  const int M = band.cutoff();
  VecC chi = band.chi_at(K0);
  VecC what = pt.what_at(K0);
  VecC dpchi = band.dpchi_at(K0);

  Wavefield psi;
  psi.grid = grid;
  psi.epsilon = eps;
  psi.values.resize(static_cast<size_t>(grid.n));
  for (int j = 0; j < grid.n; ++j) {
    const double x = grid.point(j);
    const double z = x / eps;
    cx base = aI(x) * synthesize(chi, M, G, z);
    cx corr = U.derivative(x, 1) * aI(x) * synthesize(what, M, G, z) -
              kImag * daI(x) * synthesize(dpchi, M, G, z);
    psi.values[static_cast<size_t>(j)] =
        (base + eps * corr) * std::exp(kImag * (K0 * x / eps));
  }
  return psi;
}

Wavefield reconstruct_wkb(const SpecialCaseSolution& sol, const RealFn& aI,
                          const PerturbTable& pt, double eps, const SpatialGrid& grid,
                          bool include_first_order, double t) {
  const BandTable& band = pt.band();
  validate_grid(grid, eps, band.lattice().period);
  const double G = band.reciprocal();
  const int M = band.cutoff();
  const double p = sol.b1(t);
  const double b0 = sol.b0(t);
  const double s1 = sol.S1(t);
  const double s2 = sol.S2(t);
  const double shift = sol.displacement(t);
  VecC chi = band.chi_at(p);
  VecC what = pt.what_at(p);

  Wavefield psi;
  psi.grid = grid;
  psi.epsilon = eps;
  psi.time = t;
  psi.values.resize(static_cast<size_t>(grid.n));
  for (int j = 0; j < grid.n; ++j) {
    const double x = grid.point(j);
    const double z = x / eps;
    cx cell = synthesize(chi, M, G, z);
    if (include_first_order)
      cell += eps * sol.c1() * synthesize(what, M, G, z);
    cx phase = std::exp(kImag * ((b0 + p * x) / eps + s1 + eps * s2));
    psi.values[static_cast<size_t>(j)] = aI(x - shift) * cell * phase;
  }
  return psi;
}

std::vector<double> all_band_occupations(const Wavefield& psi, const PeriodicPotential& V,
                                         int M) {
  const double a = V.lattice().period;
  const double G = V.lattice().reciprocal();
  const double eps = psi.epsilon;
  const int N = psi.grid.n;
  const double L = psi.grid.length();
  const double cells_d = L / (eps * a);
  const int ncell = static_cast<int>(std::lround(cells_d));
  if (std::abs(cells_d - ncell) > 1e-9 || ncell < 1)
    throw std::invalid_argument("band_occupation: grid not commensurate with eps*a");
  if (N % ncell != 0)
    throw std::invalid_argument("band_occupation: points per cell not integral");
  const int nz = N / ncell;
  if (nz / 2 > M)
    throw std::invalid_argument("band_occupation: cutoff too small for the grid");

  std::vector<cx> spec = fft(psi.values);
  double total = 0.0;
  for (const cx& v : spec) total += std::norm(v);
  if (total < 1e-14)
    throw std::invalid_argument("band_occupation: field mass too small");

  const int dim = 2 * M + 1;
  std::vector<double> occ(static_cast<size_t>(dim), 0.0);
  for (int r = 0; r < ncell; ++r) {
    // fiber momentum: p_r = G r / ncell, plane-wave components l = r + m*ncell
    const double p = G * r / ncell;
    VecC fiber = VecC::Zero(dim);
    for (int m = -M; m <= M; ++m) {
      int l = r + m * ncell;
      if (l < -(N / 2) || l >= N / 2) continue;  // beyond the resolved range
      int k = l >= 0 ? l : l + N;
      // the spectrum is taken relative to xmin; restore the absolute-z phase
      cx origin = std::exp(-kImag * (kTwoPi * l * psi.grid.xmin / L));
      fiber(m + M) = spec[static_cast<size_t>(k)] * origin;
    }
    MatC H = assemble_hamiltonian(V, p, M);
    Eigen::SelfAdjointEigenSolver<MatC> es(H);
    for (int n = 0; n < dim; ++n) {
      cx amp = es.eigenvectors().col(n).dot(fiber);
      occ[static_cast<size_t>(n)] += std::norm(amp) / total;
    }
  }
  return occ;
}

double band_occupation(const Wavefield& psi, const PeriodicPotential& V, int n, int M) {
  if (n < 1) throw std::invalid_argument("band_occupation: band index must be >= 1");
  std::vector<double> occ = all_band_occupations(psi, V, M);
  if (n > static_cast<int>(occ.size()))
    throw std::invalid_argument("band_occupation: band index beyond cutoff");
  return occ[static_cast<size_t>(n - 1)];
}

void save_wavefield(const Wavefield& psi, const std::string& basename) {
  std::ofstream bin(basename + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("save_wavefield: cannot open " + basename + ".bin");
  for (const cx& v : psi.values) {
    double re = v.real(), im = v.imag();
    bin.write(reinterpret_cast<const char*>(&re), sizeof(double));
    bin.write(reinterpret_cast<const char*>(&im), sizeof(double));
  }
  nlohmann::json meta;
  meta["grid"] = {{"xmin", psi.grid.xmin}, {"xmax", psi.grid.xmax}, {"n", psi.grid.n}};
  meta["epsilon"] = psi.epsilon;
  meta["t"] = psi.time;
  std::ofstream side(basename + ".json");
  side << meta.dump(2) << "\n";
}

Wavefield load_wavefield(const std::string& basename) {
  std::ifstream side(basename + ".json");
  if (!side) throw std::runtime_error("load_wavefield: cannot open " + basename + ".json");
  nlohmann::json meta = nlohmann::json::parse(side);
  Wavefield psi;
  psi.grid.xmin = meta["grid"]["xmin"].get<double>();
  psi.grid.xmax = meta["grid"]["xmax"].get<double>();
  psi.grid.n = meta["grid"]["n"].get<int>();
  psi.epsilon = meta["epsilon"].get<double>();
  psi.time = meta["t"].get<double>();
  std::ifstream bin(basename + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_wavefield: cannot open " + basename + ".bin");
  psi.values.resize(static_cast<size_t>(psi.grid.n));
  for (cx& v : psi.values) {
    double re = 0.0, im = 0.0;
    bin.read(reinterpret_cast<char*>(&re), sizeof(double));
    bin.read(reinterpret_cast<char*>(&im), sizeof(double));
    v = cx(re, im);
  }
  if (!bin) throw std::runtime_error("load_wavefield: truncated binary file");
  return psi;
}

}  // namespace bloch

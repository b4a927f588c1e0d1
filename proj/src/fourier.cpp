#include "bloch/fourier.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>

namespace bloch {

namespace {

// One cached in-place plan pair per transform size. Single-threaded use.
struct PlanPair {
  fftw_complex* buf = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  int n = 0;

  explicit PlanPair(int n_) : n(n_) {
    buf = fftw_alloc_complex(static_cast<size_t>(n));
    fwd = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~PlanPair() {
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (buf) fftw_free(buf);
  }
  PlanPair(const PlanPair&) = delete;
  PlanPair& operator=(const PlanPair&) = delete;
};

PlanPair& plans_for(int n) {
  static std::map<int, std::unique_ptr<PlanPair>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<PlanPair>(n)).first;
  return *it->second;
}

std::vector<cx> run(const std::vector<cx>& in, bool forward) {
  const int n = static_cast<int>(in.size());
  if (n == 0) throw std::invalid_argument("fft: empty input");
  PlanPair& p = plans_for(n);
  for (int i = 0; i < n; ++i) {
    p.buf[i][0] = in[static_cast<size_t>(i)].real();
    p.buf[i][1] = in[static_cast<size_t>(i)].imag();
  }
  fftw_execute(forward ? p.fwd : p.bwd);
  std::vector<cx> out(static_cast<size_t>(n));
  const double scale = forward ? 1.0 : 1.0 / n;
  for (int i = 0; i < n; ++i)
    out[static_cast<size_t>(i)] = scale * cx(p.buf[i][0], p.buf[i][1]);
  return out;
}

}  // namespace

std::vector<cx> fft(const std::vector<cx>& in) { return run(in, true); }
std::vector<cx> ifft(const std::vector<cx>& in) { return run(in, false); }

std::vector<cx> spectral_derivative(const std::vector<cx>& samples, double period,
                                    int order) {
  const int n = static_cast<int>(samples.size());
  std::vector<cx> spec = fft(samples);
  for (int k = 0; k < n; ++k) {
    int f = signed_freq(k, n);
    if (n % 2 == 0 && k == n / 2 && order % 2 == 1) {
      spec[static_cast<size_t>(k)] = 0.0;  // no consistent sign at Nyquist
      continue;
    }
    cx ik = kImag * (kTwoPi * f / period);
    cx mult = 1.0;
    for (int j = 0; j < order; ++j) mult *= ik;
    spec[static_cast<size_t>(k)] *= mult;
  }
  return ifft(spec);
}

std::vector<double> spectral_derivative(const std::vector<double>& samples,
                                        double period, int order) {
  std::vector<cx> in(samples.begin(), samples.end());
  std::vector<cx> out = spectral_derivative(in, period, order);
  std::vector<double> res(out.size());
  for (size_t i = 0; i < out.size(); ++i) res[i] = out[i].real();
  return res;
}

TrigSeries::TrigSeries(std::vector<cx> samples, double x0, double period)
    : n_(static_cast<int>(samples.size())), x0_(x0), period_(period) {
  spec_ = fft(samples);
  for (auto& c : spec_) c /= static_cast<double>(n_);
}

TrigSeries::TrigSeries(const std::vector<double>& samples, double x0, double period)
    : TrigSeries(std::vector<cx>(samples.begin(), samples.end()), x0, period) {}

cx TrigSeries::eval(double x) const {
  double theta = kTwoPi * (x - x0_) / period_;
  theta -= kTwoPi * std::floor(theta / kTwoPi);
  cx s = 0.0;
  for (int k = 0; k < n_; ++k) {
    int f = signed_freq(k, n_);
    if (n_ % 2 == 0 && k == n_ / 2) {
      // split the Nyquist coefficient symmetrically
      s += spec_[static_cast<size_t>(k)] * std::cos(0.5 * n_ * theta);
      continue;
    }
    s += spec_[static_cast<size_t>(k)] * std::exp(kImag * (static_cast<double>(f) * theta));
  }
  return s;
}

}  // namespace bloch

#pragma once

#include <vector>

#include "bloch/types.hpp"

namespace bloch {

// Forward/inverse DFT, FFTW backed. Inverse includes the 1/n factor.
std::vector<cx> fft(const std::vector<cx>& in);
std::vector<cx> ifft(const std::vector<cx>& in);

// Signed frequency index of DFT bin k for size n: 0,1,...,n/2-1,-n/2,...,-1.
inline int signed_freq(int k, int n) { return k <= (n - 1) / 2 ? k : k - n; }

// Spectral derivative of a periodic sample vector; period L in the sample
// coordinate. Nyquist mode is zeroed for odd derivative orders.
std::vector<cx> spectral_derivative(const std::vector<cx>& samples, double period,
                                    int order);
std::vector<double> spectral_derivative(const std::vector<double>& samples,
                                        double period, int order);

// Trigonometric interpolant of uniform periodic samples f(x0 + j*period/n).
// Reproduces the nodes exactly; Nyquist handled symmetrically.
class TrigSeries {
 public:
  TrigSeries() = default;
  TrigSeries(std::vector<cx> samples, double x0, double period);
  TrigSeries(const std::vector<double>& samples, double x0, double period);

  cx eval(double x) const;
  double eval_real(double x) const { return eval(x).real(); }
  int size() const { return n_; }

 private:
  int n_ = 0;
  double x0_ = 0.0, period_ = 1.0;
  std::vector<cx> spec_;  // DFT/n, bins in FFT order
};

}  // namespace bloch

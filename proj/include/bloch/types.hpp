#pragma once

#include <complex>
#include <Eigen/Dense>

namespace bloch {

using cx = std::complex<double>;
using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;
using MatC = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr cx kImag{0.0, 1.0};

}  // namespace bloch

#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qvelab {

using Complex = std::complex<double>;
using RVector = Eigen::VectorXd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;

// Thrown for malformed inputs: bad profile specs, bad configs, violated preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a numerical routine cannot produce a usable answer.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SymmetryClass { real_symmetric, complex_hermitian };

/// A point z = tau + i*eta of the complex upper half-plane.
struct SpectralPoint {
  double tau = 0.0;
  double eta = 1.0;

  [[nodiscard]] Complex z() const { return {tau, eta}; }
};

}  // namespace qvelab

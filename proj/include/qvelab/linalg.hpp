#pragma once

#include "qvelab/types.hpp"

// Thin wrappers over LAPACK for the dense self-adjoint work.
namespace qvelab::linalg {

struct RealEigen {
  RVector values;   // ascending
  RMatrix vectors;  // columns, empty when not requested
};

struct ComplexEigen {
  RVector values;
  CMatrix vectors;
};

RealEigen eigh(const RMatrix& h, bool with_vectors);
ComplexEigen eigh(const CMatrix& h, bool with_vectors);

// Number of eigenvalues strictly below x, from the inertia of an LDL^T
// factorization of h - x.
int count_below(const RMatrix& h, double x);
int count_below(const CMatrix& h, double x);

RVector singular_values(const CMatrix& a);

}  // namespace qvelab::linalg

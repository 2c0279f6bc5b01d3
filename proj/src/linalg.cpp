#include "qvelab/linalg.hpp"

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <string>
#include <vector>

namespace qvelab::linalg {

namespace {

void check_info(lapack_int info, const char* routine) {
  if (info != 0) throw NumericalFailure(std::string(routine) + " failed with info " + std::to_string(info));
}

void require_square(Eigen::Index rows, Eigen::Index cols) {
  if (rows != cols || rows == 0) throw InvalidInput("linalg: expected a nonempty square matrix");
}

// Inertia of a block-diagonal D from ?sytrf/?hetrf: 1x1 blocks where ipiv > 0,
// 2x2 blocks where ipiv < 0 (lower storage: the pair (k, k+1)).
template <typename Matrix>
int negative_inertia(const Matrix& ldl, const std::vector<lapack_int>& ipiv) {
  const auto n = static_cast<Eigen::Index>(ipiv.size());
  int negative = 0;
  for (Eigen::Index k = 0; k < n;) {
    if (ipiv[static_cast<std::size_t>(k)] > 0) {
      if (std::real(ldl(k, k)) < 0.0) ++negative;
      k += 1;
    } else {
      const double a = std::real(ldl(k, k));
      const double c = std::real(ldl(k + 1, k + 1));
      const double b = std::abs(ldl(k + 1, k));
      const double det = a * c - b * b;
      if (det < 0.0) {
        negative += 1;
      } else if (a + c < 0.0) {
        negative += 2;
      }
      k += 2;
    }
  }
  return negative;
}

}  // namespace

RealEigen eigh(const RMatrix& h, bool with_vectors) {
  require_square(h.rows(), h.cols());
  const auto n = static_cast<lapack_int>(h.rows());
  RealEigen out;
  out.values.resize(n);
  RMatrix work = h;
  if (with_vectors) {
    check_info(LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, work.data(), n, out.values.data()), "dsyevd");
    out.vectors = std::move(work);
  } else {
    check_info(LAPACKE_dsyev(LAPACK_COL_MAJOR, 'N', 'L', n, work.data(), n, out.values.data()), "dsyev");
  }
  return out;
}

ComplexEigen eigh(const CMatrix& h, bool with_vectors) {
  require_square(h.rows(), h.cols());
  const auto n = static_cast<lapack_int>(h.rows());
  ComplexEigen out;
  out.values.resize(n);
  CMatrix work = h;
  auto* data = reinterpret_cast<lapack_complex_double*>(work.data());
  if (with_vectors) {
    check_info(LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'L', n, data, n, out.values.data()), "zheevd");
    out.vectors = std::move(work);
  } else {
    check_info(LAPACKE_zheev(LAPACK_COL_MAJOR, 'N', 'L', n, data, n, out.values.data()), "zheev");
  }
  return out;
}

int count_below(const RMatrix& h, double x) {
  require_square(h.rows(), h.cols());
  const auto n = static_cast<lapack_int>(h.rows());
  RMatrix work = h;
  work.diagonal().array() -= x;
  std::vector<lapack_int> ipiv(static_cast<std::size_t>(n));
  const lapack_int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, work.data(), n, ipiv.data());
  if (info < 0) check_info(info, "dsytrf");
  // info > 0: exact zero pivot, x is an eigenvalue; it is not counted as below.
  return negative_inertia(work, ipiv);
}

int count_below(const CMatrix& h, double x) {
  require_square(h.rows(), h.cols());
  const auto n = static_cast<lapack_int>(h.rows());
  CMatrix work = h;
  work.diagonal().array() -= x;
  std::vector<lapack_int> ipiv(static_cast<std::size_t>(n));
  const lapack_int info = LAPACKE_zhetrf(LAPACK_COL_MAJOR, 'L', n,
                                         reinterpret_cast<lapack_complex_double*>(work.data()), n, ipiv.data());
  if (info < 0) check_info(info, "zhetrf");
  return negative_inertia(work, ipiv);
}

RVector singular_values(const CMatrix& a) {
  if (a.size() == 0) throw InvalidInput("linalg: empty matrix");
  const auto m = static_cast<lapack_int>(a.rows());
  const auto n = static_cast<lapack_int>(a.cols());
  CMatrix work = a;
  RVector sv(std::min(m, n));
  check_info(LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', m, n, reinterpret_cast<lapack_complex_double*>(work.data()), m,
                            sv.data(), nullptr, 1, nullptr, 1),
             "zgesdd");
  return sv;
}

}  // namespace qvelab::linalg

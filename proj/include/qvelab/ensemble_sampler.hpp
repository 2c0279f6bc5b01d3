#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "qvelab/types.hpp"
#include "qvelab/variance_profile.hpp"

namespace qvelab {

enum class EntryLaw { gaussian, bounded_uniform, rademacher };
std::string to_string(EntryLaw law);
EntryLaw entry_law_from_string(const std::string& name);
std::string to_string(SymmetryClass cls);
SymmetryClass symmetry_class_from_string(const std::string& name);

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, i, j, counter), so entries do not depend on traversal order.
/// Mixing is the SplitMix64 finalizer applied along the key.
struct CounterRng {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  [[nodiscard]] std::uint64_t bits(std::uint64_t i, std::uint64_t j, std::uint64_t counter) const;
  // Uniform on the open interval (0, 1).
  [[nodiscard]] double uniform(std::uint64_t i, std::uint64_t j, std::uint64_t counter) const;
  // Standard normal by Box-Muller from counters (2c, 2c+1).
  [[nodiscard]] double normal(std::uint64_t i, std::uint64_t j, std::uint64_t c) const;
  // Unit-variance draw of the given law.
  [[nodiscard]] double standardized(EntryLaw law, std::uint64_t i, std::uint64_t j, std::uint64_t c) const;
};

struct SamplerOptions {
  // Share of s_ij carried by Re h_ij in the complex class; Im gets the rest.
  double re_fraction = 0.5;
};

/// One self-adjoint matrix with a lazily computed, cached spectrum.
class MatrixSample {
 public:
  MatrixSample(RMatrix h, std::uint64_t seed, EntryLaw law);
  MatrixSample(CMatrix h, std::uint64_t seed, EntryLaw law);

  [[nodiscard]] int n() const;
  [[nodiscard]] SymmetryClass symmetry() const { return symmetry_; }
  [[nodiscard]] bool is_real() const { return symmetry_ == SymmetryClass::real_symmetric; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] EntryLaw law() const { return law_; }
  [[nodiscard]] const RMatrix& real() const;
  [[nodiscard]] const CMatrix& complex() const;
  // h_ij as a complex number regardless of class.
  [[nodiscard]] Complex entry(int i, int j) const;
  // Copy of h as a complex matrix.
  [[nodiscard]] CMatrix as_complex() const;

  // Ascending eigenvalues; computed once.
  [[nodiscard]] const RVector& eigenvalues() const;
  // Orthonormal eigenvectors as columns, cached in the sample's own scalar
  // type; computing them also fills the eigenvalue cache.
  [[nodiscard]] const RMatrix& real_eigenvectors() const;
  [[nodiscard]] const CMatrix& complex_eigenvectors() const;
  // Copy of the eigenvectors as a complex matrix, for either class.
  [[nodiscard]] CMatrix eigenvectors() const;
  [[nodiscard]] bool has_eigenvectors() const { return rvectors_.size() > 0 || cvectors_.size() > 0; }
  // Drop the cached spectrum (frees memory for large n).
  void release_spectrum() const;

 private:
  std::variant<RMatrix, CMatrix> h_;
  SymmetryClass symmetry_;
  std::uint64_t seed_ = 0;
  EntryLaw law_ = EntryLaw::gaussian;
  mutable RVector values_;
  mutable RMatrix rvectors_;
  mutable CMatrix cvectors_;
};

/// Independent centered entries h_ij (i <= j) with E|h_ij|^2 = s_ij, mirrored
/// to a self-adjoint matrix. Real diagonal in both classes.
MatrixSample sample(const VarianceProfile& profile, SymmetryClass cls, EntryLaw law, std::uint64_t seed,
                    const SamplerOptions& options = {});

/// GOE/GUE normalized to the semicircle on [-2, 2]: real off-diagonal
/// variance 1/N and diagonal 2/N; complex Re/Im 1/(2N) each, diagonal 1/N.
MatrixSample sample_gaussian_reference(int n, SymmetryClass cls, std::uint64_t seed);

/// H_t = e^{-t/2} H_0 + (1 - e^{-t})^{1/2} U.
MatrixSample dbm_interpolate(const MatrixSample& h0, const MatrixSample& u, double t);

// Re/Im covariance eigenvalues min(r, 1-r) s_ij >= q/N for every pair (the
// real class needs s_ij >= q/N).
bool sampler_covariance_q_full(const VarianceProfile& profile, SymmetryClass cls, double re_fraction);

struct MomentRow {
  int k = 0;
  double variance = 0.0;     // s of the entry class
  double abs_ratio = 0.0;    // mean |h|^k / s^{k/2}
  double signed_ratio = 0.0; // mean Re(h)^k / s^{k/2} (odd-moment symmetry check)
  std::size_t count = 0;
};

struct MomentReport {
  std::vector<MomentRow> rows;
  std::map<int, double> worst_ratio;  // k -> max abs_ratio over entry classes
  bool zero_variance_entries_vanish = true;
  std::string note;
};

/// Empirical moments per entry class (entries sharing one variance value,
/// diagonal and off-diagonal pooled) against s^{k/2}.
MomentReport verify_moments(const std::vector<MatrixSample>& samples, const VarianceProfile& profile, int k_max);

// Entrywise mean of |h_ij|^2 over the samples.
RMatrix empirical_variance(const std::vector<MatrixSample>& samples);

/// Little-endian dump: magic "QVLB", u32 version, u64 n, u32 class, u32 law,
/// u64 seed, then row-major entries (f64, or f64 re/im pairs for complex).
void write_binary(const MatrixSample& s, std::ostream& os);
MatrixSample read_binary(std::istream& is);

}  // namespace qvelab

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qvelab/types.hpp"

namespace qvelab {

enum class ProfileKind { stochastic_constant, block_constant, kernel_discretized, custom_matrix };

std::string to_string(ProfileKind kind);
ProfileKind profile_kind_from_string(const std::string& name);

// Model constants: primitivity p, solution bound P, primitivity exponent L and
// fullness q (q = 0 means fullness is not asserted).
struct ModelParams {
  double p = 0.1;
  double big_p = 10.0;
  int l = 1;
  double q = 0.0;
};

struct BlockSpec {
  std::vector<int> sizes;
  // Symmetric matrix of block variances. Absolute values unless scaled_by_n,
  // in which case entry (a, b) is N * s_ij for i in block a, j in block b.
  RMatrix variances;
  bool scaled_by_n = false;
};

// A symmetric nonnegative kernel f(x, y) on [0,1]^2. Named kernels are
// serializable; `fn`, when set, overrides the named formula.
//
//   affine-product : a + b*x*y
//   affine-sum     : a + b*(x + y)
//   gaussian-band  : floor + exp(-(x - y)^2 / (2 width^2))
struct KernelSpec {
  std::string name = "affine-product";
  std::map<std::string, double> params;
  std::function<double(double, double)> fn;

  [[nodiscard]] double operator()(double x, double y) const;
  [[nodiscard]] double param(const std::string& key, double fallback) const;
};

struct ProfileSpec {
  ProfileKind kind = ProfileKind::stochastic_constant;
  int n = 0;
  ModelParams params;
  BlockSpec blocks;
  KernelSpec kernel;
  RMatrix entries;  // custom-matrix only
  // Custom and block profiles with entries above 1/N are rejected unless this
  // is set. Kernel profiles are always rescaled to max entry exactly 1/N.
  bool rescale = false;
};

/// Immutable variance matrix S together with its model parameters.
///
/// Rows of S that are exactly identical are grouped into classes; the QVE
/// solution is constant on each class, which the solver exploits.
class VarianceProfile {
 public:
  [[nodiscard]] int n() const { return static_cast<int>(s_.rows()); }
  [[nodiscard]] const RMatrix& s() const { return s_; }
  [[nodiscard]] double operator()(int i, int j) const { return s_(i, j); }
  [[nodiscard]] const ModelParams& params() const { return spec_.params; }
  [[nodiscard]] ProfileKind kind() const { return spec_.kind; }
  [[nodiscard]] const ProfileSpec& spec() const { return spec_; }
  [[nodiscard]] double rescale_factor() const { return rescale_factor_; }
  [[nodiscard]] std::uint64_t hash() const { return hash_; }

  [[nodiscard]] int class_count() const { return static_cast<int>(class_sizes_.size()); }
  [[nodiscard]] const std::vector<int>& row_class() const { return row_class_; }
  [[nodiscard]] const std::vector<int>& class_sizes() const { return class_sizes_; }
  // reduced()(c, d) = sum over j in class d of s(rep(c), j)
  [[nodiscard]] const RMatrix& reduced() const { return reduced_; }

  [[nodiscard]] VarianceProfile with_params(const ModelParams& params) const;

  friend VarianceProfile build_profile(const ProfileSpec& spec);

 private:
  VarianceProfile(ProfileSpec spec, RMatrix s, double rescale_factor);

  ProfileSpec spec_;
  RMatrix s_;
  double rescale_factor_ = 1.0;
  std::uint64_t hash_ = 0;
  std::vector<int> row_class_;
  std::vector<int> class_sizes_;
  RMatrix reduced_;
};

VarianceProfile build_profile(const ProfileSpec& spec);

struct AssumptionReport {
  bool flat_ok = false;
  double max_entry_times_n = 0.0;
  bool primitive_ok = false;
  double min_power_entry_times_n = 0.0;  // min entry of S^L, times N
  bool q_full_ok = false;
  double min_fullness_times_n = 0.0;
  std::optional<bool> bounded_solution_ok;  // filled by the solver module
  double max_abs_m = 0.0;
  std::string notes;
};

// For the complex class, `re_fraction` is the share of s_ij carried by Re h_ij
// (the Re/Im parts are drawn independently), so the 2x2 covariance has
// eigenvalues re_fraction*s_ij and (1 - re_fraction)*s_ij.
AssumptionReport check_assumptions(const VarianceProfile& profile,
                                   SymmetryClass symmetry = SymmetryClass::real_symmetric,
                                   double re_fraction = 0.5);

// Minimum entry of S^power computed by repeated dense multiplication.
double min_power_entry(const RMatrix& s, int power);

namespace presets {

// s_ij = 1/N: the semicircle profile.
VarianceProfile semicircle(int n, ModelParams params = {});

// Two blocks of relative sizes (fraction, 1 - fraction) with N*S given blockwise.
VarianceProfile two_block(int n, double fraction, double intra1, double inter, double intra2,
                          ModelParams params = {});

// Three-interval support with two gaps of length ~0.31 at |tau| ~ 0.24..0.55.
VarianceProfile gap_profile(int n);

// Same block layout with fractions (0.4, 0.6); the gap near |tau| ~ 0.14
// closes into a cusp as `intra2` increases through ~0.03.
VarianceProfile cusp_family(int n, double intra2);

// q-full, non-stochastic two-block profile with a single-interval support.
VarianceProfile qfull_two_block(int n);

}  // namespace presets

}  // namespace qvelab

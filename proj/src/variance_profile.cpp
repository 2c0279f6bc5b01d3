#include "qvelab/variance_profile.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_map>

namespace qvelab {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < bytes; ++k) {
    h ^= p[k];
    h *= 1099511628211ULL;
  }
  return h;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidInput(message);
}

void require_symmetric_nonnegative(const RMatrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      require(std::isfinite(s(i, j)), "variance profile: non-finite entry");
      require(s(i, j) >= 0.0, "variance profile: negative entry at (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ")");
      require(s(i, j) == s(j, i), "variance profile: asymmetric entry at (" + std::to_string(i) +
                                      ", " + std::to_string(j) + ")");
    }
  }
}

RMatrix expand_blocks(const BlockSpec& blocks, int n) {
  const auto nb = static_cast<Eigen::Index>(blocks.sizes.size());
  require(nb > 0, "block-constant profile: no blocks");
  require(blocks.variances.rows() == nb && blocks.variances.cols() == nb,
          "block-constant profile: variance matrix must be blocks x blocks");
  require(std::all_of(blocks.sizes.begin(), blocks.sizes.end(), [](int b) { return b > 0; }),
          "block-constant profile: block sizes must be positive");
  require(std::accumulate(blocks.sizes.begin(), blocks.sizes.end(), 0) == n,
          "block-constant profile: block sizes must sum to n");
  const double unit = blocks.scaled_by_n ? 1.0 / n : 1.0;
  std::vector<int> owner;
  owner.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index b = 0; b < nb; ++b) owner.insert(owner.end(), blocks.sizes[b], static_cast<int>(b));
  RMatrix s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = blocks.variances(owner[i], owner[j]) * unit;
  return s;
}

}  // namespace

std::string to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::stochastic_constant: return "stochastic-constant";
    case ProfileKind::block_constant: return "block-constant";
    case ProfileKind::kernel_discretized: return "kernel-discretized";
    case ProfileKind::custom_matrix: return "custom-matrix";
  }
  return "unknown";
}

ProfileKind profile_kind_from_string(const std::string& name) {
  for (auto k : {ProfileKind::stochastic_constant, ProfileKind::block_constant,
                 ProfileKind::kernel_discretized, ProfileKind::custom_matrix}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidInput("unknown profile kind '" + name + "'");
}

double KernelSpec::param(const std::string& key, double fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

double KernelSpec::operator()(double x, double y) const {
  if (fn) return fn(x, y);
  if (name == "affine-product") return param("a", 0.5) + param("b", 0.5) * x * y;
  if (name == "affine-sum") return param("a", 0.5) + param("b", 0.25) * (x + y);
  if (name == "gaussian-band") {
    const double w = param("width", 0.2);
    return param("floor", 0.1) + std::exp(-(x - y) * (x - y) / (2.0 * w * w));
  }
  throw InvalidInput("unknown kernel '" + name + "'");
}

VarianceProfile::VarianceProfile(ProfileSpec spec, RMatrix s, double rescale_factor)
    : spec_(std::move(spec)), s_(std::move(s)), rescale_factor_(rescale_factor) {
  const int n = static_cast<int>(s_.rows());
  hash_ = fnv1a(&n, sizeof n);
  hash_ = fnv1a(s_.data(), sizeof(double) * static_cast<std::size_t>(s_.size()), hash_);

  // Group identical rows. S is symmetric, so column j of S is row j.
  row_class_.assign(static_cast<std::size_t>(n), -1);
  std::unordered_multimap<std::uint64_t, int> by_hash;
  std::vector<int> reps;
  for (int i = 0; i < n; ++i) {
    const double* row = s_.col(i).data();
    const auto h = fnv1a(row, sizeof(double) * static_cast<std::size_t>(n));
    auto [lo, hi] = by_hash.equal_range(h);
    for (auto it = lo; it != hi; ++it) {
      const int rep = reps[static_cast<std::size_t>(it->second)];
      if (std::memcmp(row, s_.col(rep).data(), sizeof(double) * static_cast<std::size_t>(n)) == 0) {
        row_class_[static_cast<std::size_t>(i)] = it->second;
        break;
      }
    }
    if (row_class_[static_cast<std::size_t>(i)] < 0) {
      const int c = static_cast<int>(reps.size());
      reps.push_back(i);
      by_hash.emplace(h, c);
      row_class_[static_cast<std::size_t>(i)] = c;
    }
  }
  const auto nc = static_cast<Eigen::Index>(reps.size());
  class_sizes_.assign(reps.size(), 0);
  for (int c : row_class_) ++class_sizes_[static_cast<std::size_t>(c)];
  reduced_ = RMatrix::Zero(nc, nc);
  for (Eigen::Index c = 0; c < nc; ++c)
    for (int j = 0; j < n; ++j) reduced_(c, row_class_[static_cast<std::size_t>(j)]) += s_(reps[c], j);
}

VarianceProfile VarianceProfile::with_params(const ModelParams& params) const {
  VarianceProfile copy = *this;
  copy.spec_.params = params;
  return copy;
}

VarianceProfile build_profile(const ProfileSpec& spec) {
  const int n = spec.n;
  require(n >= 2, "variance profile: n must be at least 2");
  require(spec.params.p > 0.0, "variance profile: p must be positive");
  require(spec.params.big_p > 0.0, "variance profile: P must be positive");
  require(spec.params.l >= 1, "variance profile: L must be a positive integer");
  require(spec.params.q >= 0.0, "variance profile: q must be nonnegative");
  const double flat = 1.0 / n;

  RMatrix s;
  double factor = 1.0;
  switch (spec.kind) {
    case ProfileKind::stochastic_constant:
      s = RMatrix::Constant(n, n, flat);
      break;
    case ProfileKind::block_constant:
      s = expand_blocks(spec.blocks, n);
      break;
    case ProfileKind::kernel_discretized: {
      s.resize(n, n);
      for (int i = 0; i < n; ++i) {
        const double x = static_cast<double>(i + 1) / n;
        for (int j = 0; j <= i; ++j) {
          const double y = static_cast<double>(j + 1) / n;
          const double fxy = spec.kernel(x, y);
          require(std::isfinite(fxy) && fxy >= 0.0, "kernel profile: kernel must be nonnegative");
          require(std::abs(fxy - spec.kernel(y, x)) <= 1e-14 * std::max(1.0, std::abs(fxy)),
                  "kernel profile: kernel must be symmetric");
          s(i, j) = s(j, i) = fxy / n;
        }
        require(s(i, i) > 0.0, "kernel profile: kernel must have a positive diagonal");
      }
      const double max_entry = s.maxCoeff();
      factor = flat / max_entry;
      s *= factor;
      break;
    }
    case ProfileKind::custom_matrix:
      require(spec.entries.rows() == n && spec.entries.cols() == n,
              "custom profile: entries must be n x n");
      s = spec.entries;
      break;
  }
  require_symmetric_nonnegative(s);

  if (spec.kind != ProfileKind::kernel_discretized) {
    const double max_entry = s.maxCoeff();
    if (max_entry > flat) {
      require(spec.rescale, "variance profile: entry " + std::to_string(max_entry) +
                                " exceeds the flatness bound 1/N = " + std::to_string(flat));
      factor = flat / max_entry;
      s *= factor;
    }
  }
  if (spec.kind != ProfileKind::custom_matrix) {
    for (int i = 0; i < n; ++i)
      require(s.row(i).maxCoeff() > 0.0, "variance profile: row " + std::to_string(i) + " is identically zero");
  }
  return VarianceProfile(spec, std::move(s), factor);
}

double min_power_entry(const RMatrix& s, int power) {
  RMatrix acc = s;
  for (int k = 1; k < power; ++k) acc = (acc * s).eval();
  return acc.minCoeff();
}

AssumptionReport check_assumptions(const VarianceProfile& profile, SymmetryClass symmetry,
                                   double re_fraction) {
  const int n = profile.n();
  const auto& prm = profile.params();
  AssumptionReport r;
  r.max_entry_times_n = profile.s().maxCoeff() * n;
  r.flat_ok = profile.s().maxCoeff() <= 1.0 / n;

  r.min_power_entry_times_n = min_power_entry(profile.s(), prm.l) * n;
  r.primitive_ok = r.min_power_entry_times_n >= prm.p;

  const double smin = profile.s().minCoeff() * n;
  if (symmetry == SymmetryClass::real_symmetric) {
    r.min_fullness_times_n = smin;
  } else {
    r.min_fullness_times_n = std::min(re_fraction, 1.0 - re_fraction) * smin;
  }
  r.q_full_ok = prm.q > 0.0 ? r.min_fullness_times_n >= prm.q : r.min_fullness_times_n > 0.0;

  r.notes = "flat margin " + std::to_string(1.0 - r.max_entry_times_n) + "; primitivity margin " +
            std::to_string(r.min_power_entry_times_n - prm.p) + " (L=" + std::to_string(prm.l) + ")";
  if (prm.q == 0.0) r.notes += "; q not asserted, q_full reports strict positivity";
  return r;
}

namespace presets {

VarianceProfile semicircle(int n, ModelParams params) {
  ProfileSpec spec;
  spec.kind = ProfileKind::stochastic_constant;
  spec.n = n;
  spec.params = params;
  return build_profile(spec);
}

VarianceProfile two_block(int n, double fraction, double intra1, double inter, double intra2,
                          ModelParams params) {
  ProfileSpec spec;
  spec.kind = ProfileKind::block_constant;
  spec.n = n;
  spec.params = params;
  const int first = static_cast<int>(std::lround(fraction * n));
  spec.blocks.sizes = {first, n - first};
  spec.blocks.variances.resize(2, 2);
  spec.blocks.variances << intra1, inter, inter, intra2;
  spec.blocks.scaled_by_n = true;
  return build_profile(spec);
}

VarianceProfile gap_profile(int n) {
  return two_block(n, 0.15, 0.0, 1.0, 0.02, ModelParams{0.02, 10.0, 2, 0.0});
}

VarianceProfile cusp_family(int n, double intra2) {
  return two_block(n, 0.4, 0.0, 1.0, intra2, ModelParams{0.02, 10.0, 2, 0.0});
}

VarianceProfile qfull_two_block(int n) {
  return two_block(n, 0.5, 1.0, 0.4, 0.6, ModelParams{0.4, 10.0, 1, 0.4});
}

}  // namespace presets

}  // namespace qvelab

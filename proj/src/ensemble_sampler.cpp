#include "qvelab/ensemble_sampler.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "qvelab/linalg.hpp"

namespace qvelab {

namespace {

constexpr std::uint64_t kStreamSample = 0x51ED2705A3C1F0B7ULL;
constexpr std::uint64_t kStreamReference = 0x8B8B3A0D41C6E1F3ULL;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Fill a self-adjoint matrix from per-cell standard deviations.
// re_sd(i, j), im_sd(i, j) for i < j; diag_sd(i).
template <typename ReSd, typename ImSd, typename DiagSd>
MatrixSample fill(int n, SymmetryClass cls, EntryLaw law, std::uint64_t seed, std::uint64_t stream, ReSd re_sd,
                  ImSd im_sd, DiagSd diag_sd) {
  const CounterRng rng{seed, stream};
  const auto nn = static_cast<std::uint64_t>(n);
  (void)nn;
  if (cls == SymmetryClass::real_symmetric) {
    RMatrix h(n, n);
    for (int j = 0; j < n; ++j) {
      const auto uj = static_cast<std::uint64_t>(j);
      for (int i = 0; i < j; ++i) {
        const double sd = re_sd(i, j);
        const double v = sd > 0.0 ? sd * rng.standardized(law, static_cast<std::uint64_t>(i), uj, 0) : 0.0;
        h(i, j) = v;
        h(j, i) = v;
      }
      const double sd = diag_sd(j);
      h(j, j) = sd > 0.0 ? sd * rng.standardized(law, uj, uj, 0) : 0.0;
    }
    return MatrixSample(std::move(h), seed, law);
  }
  CMatrix h(n, n);
  for (int j = 0; j < n; ++j) {
    const auto uj = static_cast<std::uint64_t>(j);
    for (int i = 0; i < j; ++i) {
      const auto ui = static_cast<std::uint64_t>(i);
      const double sr = re_sd(i, j), si = im_sd(i, j);
      const double re = sr > 0.0 ? sr * rng.standardized(law, ui, uj, 0) : 0.0;
      const double im = si > 0.0 ? si * rng.standardized(law, ui, uj, 1) : 0.0;
      h(i, j) = Complex(re, im);
      h(j, i) = Complex(re, -im);
    }
    const double sd = diag_sd(j);
    h(j, j) = Complex(sd > 0.0 ? sd * rng.standardized(law, uj, uj, 0) : 0.0, 0.0);
  }
  return MatrixSample(std::move(h), seed, law);
}

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw InvalidInput("read_binary: truncated stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

std::string to_string(EntryLaw law) {
  switch (law) {
    case EntryLaw::gaussian: return "gaussian";
    case EntryLaw::bounded_uniform: return "bounded-uniform";
    case EntryLaw::rademacher: return "rademacher";
  }
  return "unknown";
}

EntryLaw entry_law_from_string(const std::string& name) {
  for (auto l : {EntryLaw::gaussian, EntryLaw::bounded_uniform, EntryLaw::rademacher})
    if (to_string(l) == name) return l;
  throw InvalidInput("unknown entry distribution '" + name + "'");
}

std::string to_string(SymmetryClass cls) {
  return cls == SymmetryClass::real_symmetric ? "real-symmetric" : "complex-hermitian";
}

SymmetryClass symmetry_class_from_string(const std::string& name) {
  if (name == "real-symmetric") return SymmetryClass::real_symmetric;
  if (name == "complex-hermitian") return SymmetryClass::complex_hermitian;
  throw InvalidInput("unknown symmetry class '" + name + "'");
}

std::uint64_t CounterRng::bits(std::uint64_t i, std::uint64_t j, std::uint64_t counter) const {
  std::uint64_t x = mix(seed ^ stream);
  x = mix(x ^ i);
  x = mix(x ^ (j * 0xD1B54A32D192ED03ULL));
  return mix(x ^ (counter * 0xAEF17502108EF2D9ULL));
}

double CounterRng::uniform(std::uint64_t i, std::uint64_t j, std::uint64_t counter) const {
  return (static_cast<double>(bits(i, j, counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t i, std::uint64_t j, std::uint64_t c) const {
  const double u1 = uniform(i, j, 2 * c), u2 = uniform(i, j, 2 * c + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double CounterRng::standardized(EntryLaw law, std::uint64_t i, std::uint64_t j, std::uint64_t c) const {
  switch (law) {
    case EntryLaw::gaussian: return normal(i, j, c);
    case EntryLaw::bounded_uniform: return std::sqrt(3.0) * (2.0 * uniform(i, j, 2 * c) - 1.0);
    case EntryLaw::rademacher: return (bits(i, j, 2 * c) >> 63) ? 1.0 : -1.0;
  }
  throw InvalidInput("unknown entry distribution");
}

MatrixSample::MatrixSample(RMatrix h, std::uint64_t seed, EntryLaw law)
    : h_(std::move(h)), symmetry_(SymmetryClass::real_symmetric), seed_(seed), law_(law) {}

MatrixSample::MatrixSample(CMatrix h, std::uint64_t seed, EntryLaw law)
    : h_(std::move(h)), symmetry_(SymmetryClass::complex_hermitian), seed_(seed), law_(law) {}

int MatrixSample::n() const {
  return static_cast<int>(is_real() ? std::get<RMatrix>(h_).rows() : std::get<CMatrix>(h_).rows());
}

const RMatrix& MatrixSample::real() const {
  if (!is_real()) throw InvalidInput("MatrixSample: not a real-symmetric sample");
  return std::get<RMatrix>(h_);
}

const CMatrix& MatrixSample::complex() const {
  if (is_real()) throw InvalidInput("MatrixSample: not a complex-hermitian sample");
  return std::get<CMatrix>(h_);
}

Complex MatrixSample::entry(int i, int j) const {
  return is_real() ? Complex(std::get<RMatrix>(h_)(i, j), 0.0) : std::get<CMatrix>(h_)(i, j);
}

CMatrix MatrixSample::as_complex() const {
  return is_real() ? CMatrix(std::get<RMatrix>(h_).cast<Complex>()) : std::get<CMatrix>(h_);
}

const RVector& MatrixSample::eigenvalues() const {
  if (values_.size() == 0) {
    values_ = is_real() ? linalg::eigh(std::get<RMatrix>(h_), false).values
                        : linalg::eigh(std::get<CMatrix>(h_), false).values;
  }
  return values_;
}

const RMatrix& MatrixSample::real_eigenvectors() const {
  const RMatrix& h = real();
  if (rvectors_.size() == 0) {
    auto e = linalg::eigh(h, true);
    values_ = std::move(e.values);
    rvectors_ = std::move(e.vectors);
  }
  return rvectors_;
}

const CMatrix& MatrixSample::complex_eigenvectors() const {
  const CMatrix& h = complex();
  if (cvectors_.size() == 0) {
    auto e = linalg::eigh(h, true);
    values_ = std::move(e.values);
    cvectors_ = std::move(e.vectors);
  }
  return cvectors_;
}

CMatrix MatrixSample::eigenvectors() const {
  return is_real() ? CMatrix(real_eigenvectors().cast<Complex>()) : complex_eigenvectors();
}

void MatrixSample::release_spectrum() const {
  values_ = RVector();
  rvectors_ = RMatrix();
  cvectors_ = CMatrix();
}

MatrixSample sample(const VarianceProfile& profile, SymmetryClass cls, EntryLaw law, std::uint64_t seed,
                    const SamplerOptions& options) {
  const int n = profile.n();
  if (profile.s().maxCoeff() > (1.0 + 1e-12) / n)
    throw InvalidInput("sample: variance exceeds the flatness bound 1/N");
  if (!(options.re_fraction >= 0.0 && options.re_fraction <= 1.0))
    throw InvalidInput("sample: re_fraction must lie in [0, 1]");
  const RMatrix& s = profile.s();
  if (cls == SymmetryClass::real_symmetric) {
    return fill(
        n, cls, law, seed, kStreamSample, [&](int i, int j) { return std::sqrt(s(i, j)); },
        [](int, int) { return 0.0; }, [&](int i) { return std::sqrt(s(i, i)); });
  }
  const double r = options.re_fraction;
  return fill(
      n, cls, law, seed, kStreamSample, [&](int i, int j) { return std::sqrt(r * s(i, j)); },
      [&](int i, int j) { return std::sqrt((1.0 - r) * s(i, j)); }, [&](int i) { return std::sqrt(s(i, i)); });
}

MatrixSample sample_gaussian_reference(int n, SymmetryClass cls, std::uint64_t seed) {
  if (n < 2) throw InvalidInput("sample_gaussian_reference: n must be at least 2");
  const double inv_n = 1.0 / n;
  if (cls == SymmetryClass::real_symmetric) {
    const double off = std::sqrt(inv_n), diag = std::sqrt(2.0 * inv_n);
    return fill(
        n, cls, EntryLaw::gaussian, seed, kStreamReference, [&](int, int) { return off; },
        [](int, int) { return 0.0; }, [&](int) { return diag; });
  }
  const double half = std::sqrt(0.5 * inv_n), diag = std::sqrt(inv_n);
  return fill(
      n, cls, EntryLaw::gaussian, seed, kStreamReference, [&](int, int) { return half; },
      [&](int, int) { return half; }, [&](int) { return diag; });
}

MatrixSample dbm_interpolate(const MatrixSample& h0, const MatrixSample& u, double t) {
  if (!(t >= 0.0)) throw InvalidInput("dbm_interpolate: t must be nonnegative");
  if (h0.symmetry() != u.symmetry()) throw InvalidInput("dbm_interpolate: symmetry class mismatch");
  if (h0.n() != u.n()) throw InvalidInput("dbm_interpolate: dimension mismatch");
  if (u.law() != EntryLaw::gaussian) throw InvalidInput("dbm_interpolate: U must be Gaussian");
  const double a = std::exp(-0.5 * t);
  const double b = std::sqrt(-std::expm1(-t));
  if (h0.is_real()) return MatrixSample(RMatrix(a * h0.real() + b * u.real()), h0.seed(), h0.law());
  return MatrixSample(CMatrix(a * h0.complex() + b * u.complex()), h0.seed(), h0.law());
}

bool sampler_covariance_q_full(const VarianceProfile& profile, SymmetryClass cls, double re_fraction) {
  const double q = profile.params().q;
  const double smin = profile.s().minCoeff();
  const double factor = cls == SymmetryClass::real_symmetric ? 1.0 : std::min(re_fraction, 1.0 - re_fraction);
  return factor * smin >= q / profile.n() * (1.0 - 1e-12);
}

MomentReport verify_moments(const std::vector<MatrixSample>& samples, const VarianceProfile& profile, int k_max) {
  if (samples.empty()) throw InvalidInput("verify_moments: no samples");
  if (k_max < 1) throw InvalidInput("verify_moments: k_max must be positive");
  const int n = profile.n();
  for (const auto& s : samples)
    if (s.n() != n) throw InvalidInput("verify_moments: sample dimension differs from the profile");

  struct Acc {
    std::vector<double> abs_sum, signed_sum;
    std::size_t count = 0;
  };
  std::map<double, Acc> classes;
  MomentReport rep;
  for (const auto& smp : samples) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i <= j; ++i) {
        const double v = profile(i, j);
        const Complex h = smp.entry(i, j);
        if (v == 0.0) {
          if (h != Complex(0.0, 0.0)) rep.zero_variance_entries_vanish = false;
          continue;
        }
        Acc& acc = classes[v];
        if (acc.abs_sum.empty()) {
          acc.abs_sum.assign(static_cast<std::size_t>(k_max), 0.0);
          acc.signed_sum.assign(static_cast<std::size_t>(k_max), 0.0);
        }
        const double a = std::abs(h), re = h.real();
        double pa = 1.0, pr = 1.0;
        for (int k = 0; k < k_max; ++k) {
          pa *= a;
          pr *= re;
          acc.abs_sum[static_cast<std::size_t>(k)] += pa;
          acc.signed_sum[static_cast<std::size_t>(k)] += pr;
        }
        ++acc.count;
      }
    }
  }
  for (const auto& [v, acc] : classes) {
    for (int k = 1; k <= k_max; ++k) {
      MomentRow row;
      row.k = k;
      row.variance = v;
      row.count = acc.count;
      const double scale = std::pow(v, 0.5 * k) * static_cast<double>(acc.count);
      row.abs_ratio = acc.abs_sum[static_cast<std::size_t>(k - 1)] / scale;
      row.signed_ratio = acc.signed_sum[static_cast<std::size_t>(k - 1)] / scale;
      rep.worst_ratio[k] = std::max(rep.worst_ratio[k], row.abs_ratio);
      rep.rows.push_back(row);
    }
  }
  if (samples.size() < 1000) rep.note = "fewer than 1000 samples; moment estimates are noisy";
  return rep;
}

RMatrix empirical_variance(const std::vector<MatrixSample>& samples) {
  if (samples.empty()) throw InvalidInput("empirical_variance: no samples");
  const int n = samples.front().n();
  RMatrix v = RMatrix::Zero(n, n);
  for (const auto& s : samples) {
    if (s.n() != n) throw InvalidInput("empirical_variance: mixed dimensions");
    if (s.is_real())
      v += s.real().array().square().matrix();
    else
      v += s.complex().cwiseAbs2();
  }
  return v / static_cast<double>(samples.size());
}

void write_binary(const MatrixSample& s, std::ostream& os) {
  static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");
  os.write("QVLB", 4);
  put<std::uint32_t>(os, 1);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(s.n()));
  put<std::uint32_t>(os, s.is_real() ? 0U : 1U);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.law()));
  put<std::uint64_t>(os, s.seed());
  const int n = s.n();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (s.is_real()) {
        put<double>(os, s.real()(i, j));
      } else {
        put<double>(os, s.complex()(i, j).real());
        put<double>(os, s.complex()(i, j).imag());
      }
    }
  }
}

MatrixSample read_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "QVLB", 4) != 0) throw InvalidInput("read_binary: bad magic");
  if (get<std::uint32_t>(is) != 1) throw InvalidInput("read_binary: unsupported version");
  const auto n64 = get<std::uint64_t>(is);
  const auto cls = get<std::uint32_t>(is);
  const auto law = get<std::uint32_t>(is);
  const auto seed = get<std::uint64_t>(is);
  if (n64 < 1 || n64 > 100000 || cls > 1 || law > 2) throw InvalidInput("read_binary: corrupt header");
  const int n = static_cast<int>(n64);
  if (cls == 0) {
    RMatrix h(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) h(i, j) = get<double>(is);
    return MatrixSample(std::move(h), seed, static_cast<EntryLaw>(law));
  }
  CMatrix h(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double re = get<double>(is);
      h(i, j) = Complex(re, get<double>(is));
    }
  return MatrixSample(std::move(h), seed, static_cast<EntryLaw>(law));
}

}  // namespace qvelab

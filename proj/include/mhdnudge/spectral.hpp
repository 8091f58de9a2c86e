#pragma once

// Periodic fields on the unit square, stored as normalised Fourier
// coefficients in the half-plane layout produced by a real-to-complex FFT:
// row i carries k1 = i (i <= n/2) or i - n, column j carries k2 = j in
// [0, n/2]. Coefficients are c(k) = n^{-2} sum_x u(x) e^{-2 pi i k.x}, so a
// pure cos(2 pi x) has amplitude 1/2 at k = (+-1, 0).

#include <mhdnudge/fft.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhdnudge {

using cplx = std::complex<double>;
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GridMismatch : public Error {
 public:
  GridMismatch() : Error("fields live on different grids") {}
};

class Grid {
 public:
  explicit Grid(int n) : n_(n) {
    if (n < 8 || n % 2 != 0)
      throw Error("grid size must be an even integer >= 8, got " + std::to_string(n));
  }

  int n() const { return n_; }
  int columns() const { return n_ / 2 + 1; }
  std::size_t modes() const { return static_cast<std::size_t>(n_) * columns(); }
  std::size_t points() const { return static_cast<std::size_t>(n_) * n_; }
  double spacing() const { return 1.0 / n_; }

  // Two-thirds rule: modes with max(|k1|,|k2|) above this are removed from
  // every quadratic product.
  int cutoff() const { return n_ / 3; }

  int k1(int i) const { return i <= n_ / 2 ? i : i - n_; }
  int k2(int j) const { return j; }
  bool nyquist(int i, int j) const { return i == n_ / 2 || j == n_ / 2; }
  // Multiplicity of a stored coefficient in the full Hermitian spectrum.
  double weight(int j) const { return (j == 0 || j == n_ / 2) ? 1.0 : 2.0; }
  double k_squared(int i, int j) const {
    const double a = k1(i), b = k2(j);
    return a * a + b * b;
  }
  int k_max_norm(int i, int j) const { return std::max(std::abs(k1(i)), std::abs(k2(j))); }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * columns() + j; }

  bool operator==(const Grid&) const = default;

 private:
  int n_;
};

class SpectralScalar {
 public:
  explicit SpectralScalar(Grid grid) : grid_(grid), c_(grid.modes()) {}

  const Grid& grid() const { return grid_; }
  std::span<cplx> coeffs() { return c_; }
  std::span<const cplx> coeffs() const { return c_; }
  cplx& at(int i, int j) { return c_[grid_.index(i, j)]; }
  const cplx& at(int i, int j) const { return c_[grid_.index(i, j)]; }

  // Coefficient of wavevector (k1, k2) in the full spectrum.
  cplx mode(int k1, int k2) const {
    const int n = grid_.n();
    if (k2 < 0 || (k2 == 0 && k1 < 0)) {
      return std::conj(mode_stored((-k1 % n + n) % n, -k2));
    }
    return mode_stored((k1 % n + n) % n, k2);
  }
  // Sets (k1,k2) and its conjugate partner so the field stays real.
  void set_mode(int k1, int k2, cplx value) {
    const int n = grid_.n();
    if (k2 < 0 || (k2 == 0 && k1 < 0)) {
      k1 = -k1;
      k2 = -k2;
      value = std::conj(value);
    }
    const int i = (k1 % n + n) % n;
    at(i, k2) = value;
    if (k2 == 0 || k2 == n / 2) at((n - i) % n, k2) = std::conj(value);
  }

  SpectralScalar& operator+=(const SpectralScalar& o) {
    check(o);
    for (std::size_t m = 0; m < c_.size(); ++m) c_[m] += o.c_[m];
    return *this;
  }
  SpectralScalar& operator-=(const SpectralScalar& o) {
    check(o);
    for (std::size_t m = 0; m < c_.size(); ++m) c_[m] -= o.c_[m];
    return *this;
  }
  SpectralScalar& operator*=(double a) {
    for (auto& v : c_) v *= a;
    return *this;
  }
  // this += a * o
  SpectralScalar& axpy(double a, const SpectralScalar& o) {
    check(o);
    for (std::size_t m = 0; m < c_.size(); ++m) c_[m] += a * o.c_[m];
    return *this;
  }

  bool operator==(const SpectralScalar&) const = default;

 private:
  cplx mode_stored(int i, int j) const {
    if (j > grid_.n() / 2) return {0.0, 0.0};
    return at(i, j);
  }
  void check(const SpectralScalar& o) const {
    if (!(o.grid_ == grid_)) throw GridMismatch();
  }

  Grid grid_;
  std::vector<cplx> c_;
};

inline SpectralScalar operator+(SpectralScalar a, const SpectralScalar& b) { return a += b; }
inline SpectralScalar operator-(SpectralScalar a, const SpectralScalar& b) { return a -= b; }
inline SpectralScalar operator*(double s, SpectralScalar a) { return a *= s; }

// Two-component vector field. `divergence_free` records that the field was
// produced by a projection or by operations that preserve solenoidality.
struct SpectralVector {
  std::array<SpectralScalar, 2> comp;
  bool divergence_free = false;

  explicit SpectralVector(Grid g) : comp{SpectralScalar(g), SpectralScalar(g)} {}
  SpectralVector(SpectralScalar a, SpectralScalar b, bool divfree = false)
      : comp{std::move(a), std::move(b)}, divergence_free(divfree) {
    if (!(comp[0].grid() == comp[1].grid())) throw GridMismatch();
  }

  const Grid& grid() const { return comp[0].grid(); }
  SpectralScalar& operator[](int c) { return comp[c]; }
  const SpectralScalar& operator[](int c) const { return comp[c]; }

  SpectralVector& operator+=(const SpectralVector& o) {
    comp[0] += o.comp[0];
    comp[1] += o.comp[1];
    divergence_free = divergence_free && o.divergence_free;
    return *this;
  }
  SpectralVector& operator-=(const SpectralVector& o) {
    comp[0] -= o.comp[0];
    comp[1] -= o.comp[1];
    divergence_free = divergence_free && o.divergence_free;
    return *this;
  }
  SpectralVector& operator*=(double a) {
    comp[0] *= a;
    comp[1] *= a;
    return *this;
  }
  SpectralVector& axpy(double a, const SpectralVector& o) {
    comp[0].axpy(a, o.comp[0]);
    comp[1].axpy(a, o.comp[1]);
    divergence_free = divergence_free && o.divergence_free;
    return *this;
  }

  bool operator==(const SpectralVector& o) const { return comp == o.comp; }
};

inline SpectralVector operator+(SpectralVector a, const SpectralVector& b) { return a += b; }
inline SpectralVector operator-(SpectralVector a, const SpectralVector& b) { return a -= b; }
inline SpectralVector operator*(double s, SpectralVector a) { return a *= s; }

inline SpectralVector zero_vector(const Grid& g) {
  SpectralVector z(g);
  z.divergence_free = true;
  return z;
}

// ---------------------------------------------------------------------------
// Transforms

struct ForwardResult {
  SpectralScalar field;
  double mean;
};

inline void enforce_hermitian(SpectralScalar& s) {
  const int n = s.grid().n();
  for (int j : {0, n / 2}) {
    for (int i = 1; i < n / 2; ++i) {
      const cplx avg = 0.5 * (s.at(i, j) + std::conj(s.at(n - i, j)));
      s.at(i, j) = avg;
      s.at(n - i, j) = std::conj(avg);
    }
    s.at(0, j) = s.at(0, j).real();
    s.at(n / 2, j) = s.at(n / 2, j).real();
  }
}

// Samples are row-major with x = i/n along the first index.
inline ForwardResult forward_transform(const Grid& grid, std::span<const double> samples) {
  if (samples.size() != grid.points())
    throw Error("sample count " + std::to_string(samples.size()) + " does not match grid n=" +
                std::to_string(grid.n()));
  SpectralScalar s(grid);
  detail::r2c(grid.n(), samples, s.coeffs());
  const double norm = 1.0 / static_cast<double>(grid.points());
  for (auto& v : s.coeffs()) v *= norm;
  const double mean = s.at(0, 0).real();
  s.at(0, 0) = 0.0;
  return {std::move(s), mean};
}

inline std::vector<double> inverse_transform(const SpectralScalar& s) {
  std::vector<double> out(s.grid().points());
  detail::c2r(s.grid().n(), s.coeffs(), out);
  return out;
}

template <class Fn>
std::vector<double> sample(const Grid& grid, Fn&& fn) {
  const int n = grid.n();
  std::vector<double> out(grid.points());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = fn(double(i) / n, double(j) / n);
  return out;
}

template <class Fn>
SpectralScalar scalar_from(const Grid& grid, Fn&& fn) {
  auto samples = sample(grid, fn);
  return forward_transform(grid, samples).field;
}

// ---------------------------------------------------------------------------
// Per-mode calculus

inline SpectralScalar derivative(const SpectralScalar& s, int axis) {
  const Grid& g = s.grid();
  SpectralScalar d(g);
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j) {
      if (g.nyquist(i, j)) continue;
      const double k = axis == 0 ? g.k1(i) : g.k2(j);
      d.at(i, j) = cplx(0.0, two_pi * k) * s.at(i, j);
    }
  return d;
}

inline SpectralVector gradient(const SpectralScalar& s) {
  return SpectralVector(derivative(s, 0), derivative(s, 1));
}

inline SpectralScalar laplacian(const SpectralScalar& s) {
  const Grid& g = s.grid();
  SpectralScalar out(g);
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j)
      out.at(i, j) = -4.0 * pi * pi * g.k_squared(i, j) * s.at(i, j);
  return out;
}

inline SpectralVector laplacian(const SpectralVector& u) {
  SpectralVector out(laplacian(u[0]), laplacian(u[1]));
  out.divergence_free = u.divergence_free;
  return out;
}

inline SpectralScalar divergence(const SpectralVector& u) {
  return derivative(u[0], 0) + derivative(u[1], 1);
}

// Orthogonal projection onto divergence-free fields, mode by mode:
// u(k) -> u(k) - k (k.u(k)) / |k|^2. Nyquist rows carry an ambiguous sign of
// k and are removed.
inline SpectralVector leray_project(const SpectralVector& u) {
  const Grid& g = u.grid();
  SpectralVector out(g);
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j) {
      if (g.nyquist(i, j) || (i == 0 && j == 0)) continue;
      const double a = g.k1(i), b = g.k2(j);
      const double k2 = a * a + b * b;
      const cplx u1 = u[0].at(i, j), u2 = u[1].at(i, j);
      const cplx dot = (a * u1 + b * u2) / k2;
      out[0].at(i, j) = u1 - a * dot;
      out[1].at(i, j) = u2 - b * dot;
    }
  out.divergence_free = true;
  return out;
}

inline SpectralScalar dealias(const SpectralScalar& s) {
  const Grid& g = s.grid();
  SpectralScalar out = s;
  const int kc = g.cutoff();
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j)
      if (g.k_max_norm(i, j) > kc) out.at(i, j) = 0.0;
  out.at(0, 0) = 0.0;
  return out;
}

inline SpectralVector dealias(const SpectralVector& u) {
  SpectralVector out(dealias(u[0]), dealias(u[1]));
  out.divergence_free = u.divergence_free;
  return out;
}

// Largest |k . u(k)| relative to the field's l2 coefficient norm.
inline double divergence_defect(const SpectralVector& u) {
  const Grid& g = u.grid();
  double worst = 0.0, total = 0.0;
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j) {
      const cplx u1 = u[0].at(i, j), u2 = u[1].at(i, j);
      total += g.weight(j) * (std::norm(u1) + std::norm(u2));
      if (g.nyquist(i, j)) continue;
      const double a = g.k1(i), b = g.k2(j);
      const double kk = std::sqrt(a * a + b * b);
      if (kk == 0.0) continue;
      worst = std::max(worst, std::abs(a * u1 + b * u2) / kk);
    }
  return total > 0.0 ? worst / std::sqrt(total) : 0.0;
}

inline bool is_divergence_free(const SpectralVector& u, double tol = 1e-12) {
  return divergence_defect(u) <= tol;
}

// ---------------------------------------------------------------------------
// Norms (Parseval on the unit square)

namespace detail {
template <class Weight>
double weighted_sum(const SpectralScalar& s, Weight&& wfn) {
  const Grid& g = s.grid();
  double acc = 0.0;
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j)
      acc += g.weight(j) * wfn(i, j) * std::norm(s.at(i, j));
  return acc;
}
}  // namespace detail

inline double l2_norm_sq(const SpectralScalar& s) {
  return detail::weighted_sum(s, [](int, int) { return 1.0; });
}
inline double h1_seminorm_sq(const SpectralScalar& s) {
  const Grid& g = s.grid();
  return detail::weighted_sum(s, [&](int i, int j) { return 4.0 * pi * pi * g.k_squared(i, j); });
}
inline double h2_seminorm_sq(const SpectralScalar& s) {
  const Grid& g = s.grid();
  return detail::weighted_sum(s, [&](int i, int j) {
    const double kk = 4.0 * pi * pi * g.k_squared(i, j);
    return kk * kk;
  });
}

inline double l2_norm_sq(const SpectralVector& u) { return l2_norm_sq(u[0]) + l2_norm_sq(u[1]); }
inline double h1_seminorm_sq(const SpectralVector& u) { return h1_seminorm_sq(u[0]) + h1_seminorm_sq(u[1]); }
inline double h2_seminorm_sq(const SpectralVector& u) { return h2_seminorm_sq(u[0]) + h2_seminorm_sq(u[1]); }

template <class Field>
double l2_norm(const Field& u) { return std::sqrt(l2_norm_sq(u)); }
template <class Field>
double h1_seminorm(const Field& u) { return std::sqrt(h1_seminorm_sq(u)); }
template <class Field>
double h2_seminorm(const Field& u) { return std::sqrt(h2_seminorm_sq(u)); }

inline double inner_product(const SpectralScalar& a, const SpectralScalar& b) {
  if (!(a.grid() == b.grid())) throw GridMismatch();
  const Grid& g = a.grid();
  double acc = 0.0;
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j)
      acc += g.weight(j) * std::real(a.at(i, j) * std::conj(b.at(i, j)));
  return acc;
}

inline double inner_product(const SpectralVector& a, const SpectralVector& b) {
  return inner_product(a[0], b[0]) + inner_product(a[1], b[1]);
}

// ---------------------------------------------------------------------------
// Random initial data

// Scalar field with |c(k)| = |k|^-decay and random phases on
// 1 <= max(|k1|,|k2|) <= k_max.
inline SpectralScalar random_scalar_field(const Grid& grid, std::uint64_t seed, double decay, int k_max) {
  if (k_max < 1 || k_max > grid.cutoff())
    throw Error("k_max " + std::to_string(k_max) + " outside [1, " + std::to_string(grid.cutoff()) + "]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, two_pi);
  SpectralScalar s(grid);
  for (int i = 0; i < grid.n(); ++i)
    for (int j = 0; j <= k_max; ++j) {
      const double theta = phase(rng);
      const int km = grid.k_max_norm(i, j);
      if (km == 0 || km > k_max) continue;
      if (j == 0 && grid.k1(i) < 0) continue;  // filled as a conjugate partner
      const double amp = std::pow(std::sqrt(grid.k_squared(i, j)), -decay);
      s.set_mode(grid.k1(i), j, std::polar(amp, theta));
    }
  return s;
}

inline SpectralVector random_divfree_field(const Grid& grid, std::uint64_t seed, double decay, int k_max) {
  std::seed_seq seq{seed, std::uint64_t{0x9e3779b97f4a7c15ULL}};
  std::array<std::uint32_t, 2> sub{};
  seq.generate(sub.begin(), sub.end());
  SpectralVector u(random_scalar_field(grid, sub[0], decay, k_max),
                   random_scalar_field(grid, sub[1], decay, k_max));
  return leray_project(u);
}

// ---------------------------------------------------------------------------
// Pseudo-spectral products

struct PhysicalVector {
  std::array<std::vector<double>, 2> comp;
};

inline PhysicalVector to_physical(const SpectralVector& u) {
  return {{inverse_transform(u[0]), inverse_transform(u[1])}};
}

inline double max_speed(const PhysicalVector& p) {
  double m = 0.0;
  for (std::size_t k = 0; k < p.comp[0].size(); ++k)
    m = std::max(m, std::hypot(p.comp[0][k], p.comp[1][k]));
  return m;
}

// Dealiased (a . grad) u, with `a` already in physical space.
inline SpectralVector advect(const PhysicalVector& a, const SpectralVector& u) {
  const Grid& g = u.grid();
  SpectralVector out(g);
  std::vector<double> prod(g.points());
  for (int c = 0; c < 2; ++c) {
    const auto dx = inverse_transform(derivative(u[c], 0));
    const auto dy = inverse_transform(derivative(u[c], 1));
    for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = a.comp[0][k] * dx[k] + a.comp[1][k] * dy[k];
    out[c] = dealias(forward_transform(g, prod).field);
  }
  return out;
}

inline SpectralVector advect(const SpectralVector& a, const SpectralVector& u) {
  if (!(a.grid() == u.grid())) throw GridMismatch();
  return advect(to_physical(a), u);
}

// ---------------------------------------------------------------------------
// Snapshot files: header `mhdnudge-field v1, n=<n>` followed by one CSV row
// `k1,k2,re_c1,im_c1,re_c2,im_c2` per stored half-plane coefficient.

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_snapshot(std::ostream& os, const SpectralVector& u) {
  const Grid& g = u.grid();
  os << "mhdnudge-field v1, n=" << g.n() << '\n';
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j) {
      const cplx a = u[0].at(i, j), b = u[1].at(i, j);
      os << g.k1(i) << ',' << g.k2(j) << ',' << format_double(a.real()) << ',' << format_double(a.imag())
         << ',' << format_double(b.real()) << ',' << format_double(b.imag()) << '\n';
    }
}

inline SpectralVector read_snapshot(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("snapshot: empty input");
  const std::string prefix = "mhdnudge-field v1, n=";
  if (line.rfind(prefix, 0) != 0) throw Error("snapshot: bad header '" + line + "'");
  const Grid g(std::stoi(line.substr(prefix.size())));
  SpectralVector u(g);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::array<std::string, 6> tok;
    for (auto& t : tok)
      if (!std::getline(ls, t, ',')) throw Error("snapshot: short row '" + line + "'");
    const int k1 = std::stoi(tok[0]), k2 = std::stoi(tok[1]);
    if (k2 < 0 || k2 > g.n() / 2 || k1 <= -g.n() / 2 || k1 > g.n() / 2)
      throw Error("snapshot: wavevector out of range in '" + line + "'");
    const int i = (k1 + g.n()) % g.n();
    u[0].at(i, k2) = cplx(std::stod(tok[2]), std::stod(tok[3]));
    u[1].at(i, k2) = cplx(std::stod(tok[4]), std::stod(tok[5]));
    ++rows;
  }
  if (rows != g.modes()) throw Error("snapshot: expected " + std::to_string(g.modes()) + " rows, got " + std::to_string(rows));
  u.divergence_free = is_divergence_free(u);
  return u;
}

}  // namespace mhdnudge

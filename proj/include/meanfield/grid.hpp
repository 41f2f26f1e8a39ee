#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "meanfield/fft.hpp"

namespace meanfield {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

/// Hard cap on sampled degrees of freedom for a single field (2^27 complex
/// amplitudes, ~2 GiB). Shared with the many-body tensor budget.
inline constexpr std::size_t kAmplitudeBudget = std::size_t(1) << 27;

/// Uniform periodic grid on the box [-L/2, L/2)^dim with 2^k points per axis.
///
/// Conventions fixed here and relied on everywhere else:
///   coordinates  x_i  = -L/2 + i h,       h = L / n
///   frequencies  xi_k = k / L with k in the centered alias range
///                       {0, 1, ..., n/2-1, -n/2, ..., -1} (FFT storage order)
/// Spectral arrays are row major, first axis slowest, matching FFTW.
class Grid {
 public:
  static Grid make(int dim, int points_per_axis, double box_length) {
    if (dim < 1 || dim > 3)
      throw std::invalid_argument("grid: dim must be 1, 2 or 3");
    int n = points_per_axis;
    if (n < 8 || (n & (n - 1)) != 0)
      throw std::invalid_argument(
          "grid: points_per_axis must be a power of two >= 8");
    if (!(box_length > 0.0) || !std::isfinite(box_length))
      throw std::invalid_argument("grid: box_length must be positive");
    std::size_t size = 1;
    for (int a = 0; a < dim; ++a) {
      if (size > kAmplitudeBudget / static_cast<std::size_t>(n))
        throw std::invalid_argument(
            "grid: requested " + std::to_string(dim) + "d grid with n=" +
            std::to_string(n) + " exceeds the amplitude budget");
      size *= static_cast<std::size_t>(n);
    }
    return Grid(dim, n, box_length, size);
  }

  int dim() const { return dim_; }
  int points_per_axis() const { return n_; }
  double box_length() const { return length_; }
  double spacing() const { return length_ / n_; }
  std::size_t size() const { return size_; }

  /// x coordinate of axis index i in [0, n).
  double coordinate(int i) const { return -0.5 * length_ + i * spacing(); }

  /// Frequency xi of axis index k in FFT storage order (centered alias range).
  double frequency(int k) const {
    int c = (k < n_ / 2) ? k : k - n_;
    return c / length_;
  }

  /// Axis index of component `axis` (0 = slowest) inside flat index `flat`.
  int unravel(std::size_t flat, int axis) const {
    int shift = (dim_ - 1 - axis) * log2n_;
    return static_cast<int>((flat >> shift) & static_cast<std::size_t>(n_ - 1));
  }

  /// Parity of the sum of all axis indices in `flat`; drives the phase that
  /// recenters transforms on the [-L/2, L/2) box.
  int index_parity(std::size_t flat) const {
    int sum = 0;
    for (int a = 0; a < dim_; ++a) sum += unravel(flat, a);
    return sum & 1;
  }

  std::vector<int> dims() const {
    return std::vector<int>(static_cast<std::size_t>(dim_), n_);
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dim_ == b.dim_ && a.n_ == b.n_ && a.length_ == b.length_;
  }
  friend bool operator!=(const Grid& a, const Grid& b) { return !(a == b); }

 private:
  Grid(int dim, int n, double length, std::size_t size)
      : dim_(dim), n_(n), length_(length), size_(size) {
    log2n_ = 0;
    while ((1 << log2n_) < n_) ++log2n_;
  }

  int dim_;
  int n_;
  double length_;
  std::size_t size_;
  int log2n_;
};

inline Grid make_grid(int dim, int points_per_axis, double box_length) {
  return Grid::make(dim, points_per_axis, box_length);
}

/// Complex samples over a Grid, physical or spectral depending on context.
struct ComplexField {
  Grid grid;
  std::vector<Complex> values;
};

inline ComplexField make_field(const Grid& grid) {
  return ComplexField{grid, std::vector<Complex>(grid.size())};
}

namespace detail {

inline void require_same_grid(const ComplexField& a, const ComplexField& b,
                              const char* what) {
  if (a.grid != b.grid)
    throw std::invalid_argument(std::string(what) + ": grids differ");
}

inline void require_sized(const ComplexField& f, const char* what) {
  if (f.values.size() != f.grid.size())
    throw std::invalid_argument(std::string(what) +
                                ": field length does not match grid");
}

/// |xi|^2 for flat spectral index, from the per-axis frequency table.
inline std::vector<double> frequency_sq_table(const Grid& grid) {
  std::vector<double> table(static_cast<std::size_t>(grid.points_per_axis()));
  for (int k = 0; k < grid.points_per_axis(); ++k) {
    double f = grid.frequency(k);
    table[static_cast<std::size_t>(k)] = f * f;
  }
  return table;
}

inline double frequency_norm_sq(const Grid& grid,
                                const std::vector<double>& table,
                                std::size_t flat) {
  double s = 0.0;
  for (int a = 0; a < grid.dim(); ++a)
    s += table[static_cast<std::size_t>(grid.unravel(flat, a))];
  return s;
}

}  // namespace detail

/// Forward transform: coefficients of f against e^{-2 pi i x.xi}, i.e. the
/// trapezoid quadrature of the continuum transform, scale spacing^dim.
/// A constant field 1 maps to box_length^dim at xi = 0.
inline ComplexField transform_forward(const ComplexField& f) {
  detail::require_sized(f, "transform_forward");
  ComplexField out = f;
  detail::fft(out.values, f.grid.dims(), FFTW_FORWARD);
  const double scale = std::pow(f.grid.spacing(), f.grid.dim());
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    double sign = f.grid.index_parity(k) ? -scale : scale;
    out.values[k] *= sign;
  }
  return out;
}

/// Inverse of transform_forward; round trip is identity to rounding.
inline ComplexField transform_inverse(const ComplexField& c) {
  detail::require_sized(c, "transform_inverse");
  ComplexField out = c;
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (c.grid.index_parity(k)) out.values[k] = -out.values[k];
  detail::fft(out.values, c.grid.dims(), FFTW_BACKWARD);
  const double scale = 1.0 / std::pow(c.grid.box_length(), c.grid.dim());
  for (auto& v : out.values) v *= scale;
  return out;
}

/// Periodic convolution with quadrature weight spacing^dim:
///   (f * g)(x_i) = h^dim sum_j f(x_j) g(x_i - x_j),
/// g wrapped periodically. Computed spectrally; the coefficient scaling makes
/// the product of coefficients exactly the coefficients of the convolution.
inline ComplexField convolve(const ComplexField& f, const ComplexField& g) {
  detail::require_same_grid(f, g, "convolve");
  ComplexField cf = transform_forward(f);
  ComplexField cg = transform_forward(g);
  for (std::size_t k = 0; k < cf.values.size(); ++k)
    cf.values[k] *= cg.values[k];
  return transform_inverse(cf);
}

enum class Norm { L1, L2, Linf, H2 };

/// Grid norms. L1/L2 are quadrature sums with weight spacing^dim, Linf is the
/// max modulus, H2 is computed spectrally as the scaled l2 norm of
/// (1 + 4 pi^2 |xi|^2) c_k, consistent with Plancherel for the L2 case.
inline double norm(const ComplexField& f, Norm which) {
  detail::require_sized(f, "norm");
  const double h = f.grid.spacing();
  const int d = f.grid.dim();
  switch (which) {
    case Norm::L1: {
      double s = 0.0;
      for (const auto& v : f.values) s += std::abs(v);
      return s * std::pow(h, d);
    }
    case Norm::L2: {
      double s = 0.0;
      for (const auto& v : f.values) s += std::norm(v);
      return std::sqrt(s * std::pow(h, d));
    }
    case Norm::Linf: {
      double m = 0.0;
      for (const auto& v : f.values) m = std::max(m, std::abs(v));
      return m;
    }
    case Norm::H2: {
      ComplexField c = transform_forward(f);
      auto table = detail::frequency_sq_table(f.grid);
      double s = 0.0;
      for (std::size_t k = 0; k < c.values.size(); ++k) {
        double mult =
            1.0 + 4.0 * kPi * kPi * detail::frequency_norm_sq(f.grid, table, k);
        s += mult * mult * std::norm(c.values[k]);
      }
      return std::sqrt(s / std::pow(f.grid.box_length(), d));
    }
  }
  throw std::logic_error("norm: unknown kind");
}

/// Probability mass inside the shell within `shell_fraction` of the box
/// boundary (any axis with |x| >= (1 - shell_fraction) L/2). Fields that keep
/// this below ~1e-6 are effectively unaffected by periodic wrap.
inline double boundary_shell_mass(const ComplexField& f,
                                  double shell_fraction = 0.1) {
  detail::require_sized(f, "boundary_shell_mass");
  const Grid& g = f.grid;
  const double cut = (1.0 - shell_fraction) * 0.5 * g.box_length();
  std::vector<bool> in_shell(static_cast<std::size_t>(g.points_per_axis()));
  for (int i = 0; i < g.points_per_axis(); ++i)
    in_shell[static_cast<std::size_t>(i)] = std::abs(g.coordinate(i)) >= cut;
  double s = 0.0;
  for (std::size_t idx = 0; idx < f.values.size(); ++idx) {
    bool shell = false;
    for (int a = 0; a < g.dim() && !shell; ++a)
      shell = in_shell[static_cast<std::size_t>(g.unravel(idx, a))];
    if (shell) s += std::norm(f.values[idx]);
  }
  return s * std::pow(g.spacing(), g.dim());
}

}  // namespace meanfield

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "meanfield/errors.hpp"
#include "meanfield/grid.hpp"
#include "meanfield/onebody.hpp"

namespace meanfield {

/// Symmetric N-particle wave function on the tensor power of a one-particle
/// grid. Amplitudes are stored row-major with particle 1 as the slowest
/// index: values[x1 * m^{N-1} + x2 * m^{N-2} + ... + xN], m = grid.size().
struct ManyBodyState {
  int particle_count = 1;
  Grid grid;  // per-particle grid
  std::vector<Complex> values;
  double time = 0.0;
};

namespace detail {

/// Total amplitude count m^N, gated by the kAmplitudeBudget cap. The error
/// message names the largest N that fits this grid and the largest grid that
/// fits this N, so callers know which knob to turn.
inline std::size_t manybody_size(const Grid& grid, int particle_count) {
  if (particle_count < 1)
    throw std::invalid_argument("manybody: particle count must be >= 1");
  const double m = static_cast<double>(grid.size());
  const double bits = particle_count * std::log2(m);
  const double budget_bits = std::log2(static_cast<double>(kAmplitudeBudget));
  if (bits > budget_bits + 1e-9) {
    const int max_n = static_cast<int>(budget_bits / std::log2(m));
    const int axis_bits = static_cast<int>(
        budget_bits / (grid.dim() * particle_count));
    const long long max_points = 1LL << axis_bits;
    std::string msg =
        "manybody: " + std::to_string(grid.points_per_axis()) + "^" +
        std::to_string(grid.dim() * particle_count) +
        " amplitudes exceed the budget of 2^27; keep N <= " +
        std::to_string(max_n) + " on this grid";
    if (max_points >= 8)
      msg += " or points_per_axis <= " + std::to_string(max_points) +
             " for N = " + std::to_string(particle_count);
    throw BudgetError(msg);
  }
  std::size_t total = 1;
  for (int p = 0; p < particle_count; ++p) total *= grid.size();
  return total;
}

/// Flat index with the particle-p and particle-q slots exchanged.
inline std::size_t transpose_index(std::size_t j, int p, int q, std::size_t m,
                                   int particle_count) {
  std::size_t idx[16];
  for (int s = particle_count - 1; s >= 0; --s) {
    idx[s] = j % m;
    j /= m;
  }
  std::swap(idx[p], idx[q]);
  std::size_t out = 0;
  for (int s = 0; s < particle_count; ++s) out = out * m + idx[s];
  return out;
}

}  // namespace detail

/// L2 norm with the tensor quadrature weight spacing^{d N}.
inline double mass(const ManyBodyState& state) {
  double acc = 0.0;
  for (const auto& v : state.values) acc += std::norm(v);
  const double w = std::pow(state.grid.spacing(),
                            state.grid.dim() * state.particle_count);
  return std::sqrt(acc * w);
}

/// Largest amplitude deviation under any particle transposition; zero for an
/// exactly symmetric state.
inline double symmetry_defect(const ManyBodyState& state) {
  const std::size_t m = state.grid.size();
  const int N = state.particle_count;
  double defect = 0.0;
  for (int p = 0; p < N; ++p)
    for (int q = p + 1; q < N; ++q)
      for (std::size_t j = 0; j < state.values.size(); ++j) {
        std::size_t k = detail::transpose_index(j, p, q, m, N);
        defect = std::max(defect,
                          std::abs(state.values[j] - state.values[k]));
      }
  return defect;
}

/// Tensor power u0^{otimes N}; exactly symmetric by construction.
inline ManyBodyState product_state(const ComplexField& u0, int particle_count) {
  detail::require_sized(u0, "product state factor");
  if (std::abs(norm(u0, Norm::L2) - 1.0) > 1e-8)
    throw std::invalid_argument("product state: factor must have unit L2 norm");
  const std::size_t total = detail::manybody_size(u0.grid, particle_count);

  ManyBodyState state{particle_count, u0.grid, u0.values, 0.0};
  state.values.reserve(total);
  for (int p = 1; p < particle_count; ++p) {
    std::vector<Complex> next(state.values.size() * u0.values.size());
    std::size_t at = 0;
    for (const auto& head : state.values)
      for (const auto& tail : u0.values) next[at++] = head * tail;
    state.values = std::move(next);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Reduced one-particle density matrix

/// One-particle marginal. Entries are kernel values gamma(x;y) scaled by
/// spacing^d, so the plain matrix trace equals the physical trace (= 1) and
/// matrix eigenvalues equal operator eigenvalues.
struct DensityMatrix {
  Grid grid;
  Eigen::MatrixXcd entries;
};

inline DensityMatrix reduced_density(const ManyBodyState& state) {
  const std::size_t m = state.grid.size();
  if (state.values.empty() || state.values.size() % m != 0)
    throw std::invalid_argument("reduced density: malformed state");
  const std::size_t cols = state.values.size() / m;
  const double d = state.grid.dim();
  const double weight =
      std::pow(state.grid.spacing(), d * state.particle_count);

  using RowMajorMatrix =
      Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajorMatrix> psi(state.values.data(),
                                       static_cast<Eigen::Index>(m),
                                       static_cast<Eigen::Index>(cols));
  DensityMatrix gamma{state.grid, Eigen::MatrixXcd()};
  gamma.entries = (psi * psi.adjoint()) * weight;
  // A A^dagger is Hermitian up to rounding; make it exact for the solvers.
  gamma.entries = 0.5 * (gamma.entries + gamma.entries.adjoint()).eval();
  return gamma;
}

/// Tr |gamma - |phi><phi|| via dense Hermitian eigendecomposition; phi must
/// be unit-normalized on the same grid. Lies in [0, 2].
inline double trace_distance(const DensityMatrix& gamma,
                             const ComplexField& phi) {
  if (phi.grid != gamma.grid)
    throw std::invalid_argument("trace distance: grid mismatch");
  if (gamma.entries.rows() != static_cast<Eigen::Index>(phi.values.size()))
    throw std::invalid_argument("trace distance: dimension mismatch");
  if (std::abs(norm(phi, Norm::L2) - 1.0) > 1e-8)
    throw std::invalid_argument("trace distance: phi must be unit-normalized");

  const double h_d = std::pow(phi.grid.spacing(), phi.grid.dim());
  Eigen::Map<const Eigen::VectorXcd> v(phi.values.data(),
                                       static_cast<Eigen::Index>(
                                           phi.values.size()));
  Eigen::MatrixXcd diff = gamma.entries - h_d * (v * v.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(
      diff, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().sum();
}

/// Largest eigenvalue of the marginal: the condensate order parameter.
inline double condensate_fraction(const DensityMatrix& gamma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(
      gamma.entries, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

// ---------------------------------------------------------------------------
// Exact N-body propagation

struct ManyBodyObservables {
  double t = 0.0;
  double l2 = 0.0;
  double energy = 0.0;
  double symmetry_defect = 0.0;
};

struct ManyBodyTrajectory {
  std::vector<double> snapshot_times;
  std::vector<DensityMatrix> reduced_densities;
  std::vector<ManyBodyObservables> observables;  // one entry per snapshot
  std::vector<double> step_times;                // every step, t=0 first
  std::vector<double> step_mass;
  ManyBodyState final_state;
};

namespace detail {

/// Pointwise total potential U(x_1..x_N) = sum_j V(x_j) +
/// (lambda/N) sum_{i<j} w(x_i - x_j), the interaction evaluated at the
/// centered periodic difference cell. V and w are per-particle fields; w is
/// expected to be the already N-scaled kernel when modeling w_N.
inline std::vector<double> total_potential_field(const Grid& grid,
                                                 const std::vector<double>& v,
                                                 const std::vector<double>& w,
                                                 double lambda,
                                                 int particle_count,
                                                 std::size_t total) {
  const std::size_t m = grid.size();
  const int d = grid.dim();
  const int n = grid.points_per_axis();
  const double pair_coupling =
      particle_count > 1 ? lambda / particle_count : 0.0;

  // Per-axis decomposition of each one-particle cell index.
  std::vector<int> axes(m * d);
  for (std::size_t c = 0; c < m; ++c)
    for (int axis = 0; axis < d; ++axis)
      axes[c * d + axis] = grid.unravel(c, axis);
  std::vector<std::size_t> stride(d, 1);
  for (int axis = d - 2; axis >= 0; --axis)
    stride[axis] = stride[axis + 1] * static_cast<std::size_t>(n);

  std::vector<double> field(total);
  std::vector<std::size_t> idx(particle_count);
  for (std::size_t j = 0; j < total; ++j) {
    std::size_t rest = j;
    for (int p = particle_count - 1; p >= 0; --p) {
      idx[p] = rest % m;
      rest /= m;
    }
    double u = 0.0;
    for (int p = 0; p < particle_count; ++p) u += v[idx[p]];
    if (pair_coupling != 0.0) {
      for (int p = 0; p < particle_count; ++p)
        for (int q = p + 1; q < particle_count; ++q) {
          std::size_t cell = 0;
          for (int axis = 0; axis < d; ++axis) {
            int delta = axes[idx[p] * d + axis] - axes[idx[q] * d + axis];
            cell += stride[axis] *
                    static_cast<std::size_t>(((delta + n / 2) % n + n) % n);
          }
          u += pair_coupling * w[cell];
        }
    }
    field[j] = u;
  }
  return field;
}

/// sum_j 4 pi^2 |xi_{k_j}|^2 over particles, indexed like the amplitudes.
inline std::vector<double> total_kinetic_symbol(const Grid& grid,
                                                int particle_count,
                                                std::size_t total) {
  const std::size_t m = grid.size();
  auto table = frequency_sq_table(grid);
  std::vector<double> one(m);
  for (std::size_t k = 0; k < m; ++k)
    one[k] = 4.0 * kPi * kPi * frequency_norm_sq(grid, table, k);

  std::vector<double> symbol(total);
  for (std::size_t j = 0; j < total; ++j) {
    std::size_t rest = j;
    double acc = 0.0;
    for (int p = 0; p < particle_count; ++p) {
      acc += one[rest % m];
      rest /= m;
    }
    symbol[j] = acc;
  }
  return symbol;
}

}  // namespace detail

/// Strang splitting on the d N-dimensional tensor grid, mirroring the
/// one-body scheme: half kinetic phase through the full-rank transform, one
/// pointwise phase of the precomputed total potential, half kinetic phase.
/// `kernel` is the interaction sampled on the one-particle grid (pass the
/// N-scaled w_N to model mean-field coupling); the 1/N pair normalization is
/// applied internally. Snapshot times must be integer multiples of dt;
/// each snapshot records mass, energy, symmetry defect, and the reduced
/// one-particle density matrix.
inline ManyBodyTrajectory evolve_manybody(
    const ManyBodyState& initial, const ComplexField& potential,
    const ComplexField& kernel, double lambda, double t_max, double dt,
    const std::vector<double>& snapshot_times = {},
    double guard_factor = 1e6) {
  const Grid& grid = initial.grid;
  const int N = initial.particle_count;
  const std::size_t total = detail::manybody_size(grid, N);
  if (initial.values.size() != total)
    throw std::invalid_argument("evolve: state size does not match N and grid");
  if (potential.grid != grid || kernel.grid != grid)
    throw std::invalid_argument("evolve: fields must live on the state grid");
  if (std::abs(mass(initial) - 1.0) > 1e-8)
    throw std::invalid_argument("evolve: state must have unit L2 norm");
  if (!(dt > 0.0) || !(t_max >= 0.0))
    throw std::invalid_argument("evolve: need t_max >= 0 and dt > 0");
  if (!std::isfinite(lambda))
    throw std::invalid_argument("evolve: lambda must be finite");
  const long long steps = std::llround(t_max / dt);
  if (std::abs(steps * dt - t_max) > 1e-6)
    throw std::invalid_argument("evolve: t_max must be a multiple of dt");

  const std::size_t m = grid.size();
  std::vector<double> v(m), w(m);
  for (std::size_t c = 0; c < m; ++c) {
    if (std::abs(potential.values[c].imag()) > 1e-12 ||
        std::abs(kernel.values[c].imag()) > 1e-12)
      throw std::invalid_argument("evolve: potential and kernel must be real");
    v[c] = potential.values[c].real();
    w[c] = kernel.values[c].real();
  }

  std::vector<std::size_t> snap_steps;
  for (double t : snapshot_times)
    snap_steps.push_back(detail::snapshot_step(t, dt, steps, "evolve"));

  const std::vector<double> u_field =
      detail::total_potential_field(grid, v, w, lambda, N, total);
  const std::vector<double> k_field =
      detail::total_kinetic_symbol(grid, N, total);

  std::vector<int> dims;
  for (int p = 0; p < N; ++p)
    for (int axis_len : grid.dims()) dims.push_back(axis_len);

  const double inv_total = 1.0 / static_cast<double>(total);
  std::vector<Complex> kinetic_phase(total), potential_phase(total);
  for (std::size_t j = 0; j < total; ++j) {
    kinetic_phase[j] = std::polar(inv_total, -0.5 * dt * k_field[j]);
    potential_phase[j] = std::polar(1.0, -dt * u_field[j]);
  }

  const double weight = std::pow(grid.spacing(), grid.dim() * N);

  ManyBodyState state = initial;
  auto energy_of = [&](const ManyBodyState& s) {
    std::vector<Complex> buf = s.values;
    detail::fft(buf, dims, FFTW_FORWARD);
    double kinetic = 0.0;
    for (std::size_t j = 0; j < total; ++j)
      kinetic += k_field[j] * std::norm(buf[j]);
    kinetic *= weight * inv_total;
    double pot = 0.0;
    for (std::size_t j = 0; j < total; ++j)
      pot += u_field[j] * std::norm(s.values[j]);
    return kinetic + pot * weight;
  };

  ManyBodyTrajectory traj{{}, {}, {}, {}, {}, initial};
  const double guard = [&] {
    double sup = 0.0;
    for (const auto& z : state.values) sup = std::max(sup, std::abs(z));
    return guard_factor * sup;
  }();

  auto record = [&](long long k) {
    state.time = k * dt;
    traj.step_times.push_back(state.time);
    traj.step_mass.push_back(mass(state));
    for (std::size_t s = 0; s < snap_steps.size(); ++s)
      if (snap_steps[s] == static_cast<std::size_t>(k)) {
        ManyBodyObservables obs;
        obs.t = state.time;
        obs.l2 = traj.step_mass.back();
        obs.energy = energy_of(state);
        obs.symmetry_defect = symmetry_defect(state);
        traj.snapshot_times.push_back(state.time);
        traj.reduced_densities.push_back(reduced_density(state));
        traj.observables.push_back(obs);
      }
  };

  record(0);
  for (long long k = 1; k <= steps; ++k) {
    detail::fft(state.values, dims, FFTW_FORWARD);
    for (std::size_t j = 0; j < total; ++j)
      state.values[j] *= kinetic_phase[j];
    detail::fft(state.values, dims, FFTW_BACKWARD);
    for (std::size_t j = 0; j < total; ++j)
      state.values[j] *= potential_phase[j];
    detail::fft(state.values, dims, FFTW_FORWARD);
    for (std::size_t j = 0; j < total; ++j)
      state.values[j] *= kinetic_phase[j];
    detail::fft(state.values, dims, FFTW_BACKWARD);

    double sup = 0.0;
    for (const auto& z : state.values) sup = std::max(sup, std::abs(z));
    if (sup > guard)
      throw BlowupError("manybody evolution blew past the Linf guard at t = " +
                        std::to_string(k * dt));
    record(k);
  }
  traj.final_state = std::move(state);
  traj.final_state.time = t_max;
  return traj;
}

}  // namespace meanfield

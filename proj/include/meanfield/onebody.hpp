#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <iostream>
#include <optional>
#include <variant>
#include <vector>

#include "meanfield/errors.hpp"
#include "meanfield/grid.hpp"

namespace meanfield {

/// Wrap-around mass allowed in the outer 10% shell before a run warns that
/// the periodic box has stopped emulating free space.
inline constexpr double kBoundaryMassThreshold = 1e-6;

// ---------------------------------------------------------------------------
// Problem description

/// Hartree self-interaction (w * |u|^2) u with a fixed sampled kernel.
struct HartreeTerm {
  ComplexField kernel;
};

/// Same mechanics with the N-scaled kernel w_N; the kernel field is expected
/// to come from scaled_interaction (sampled from the closed form, never
/// resampled from grid values). N and beta ride along as metadata.
struct ScaledHartreeTerm {
  ComplexField kernel;
  int particle_number = 1;
  double beta = 0.0;
};

/// Local cubic term a |u|^2 u, the delta-interaction limit with a = int w.
struct CubicTerm {
  double coefficient = 0.0;
};

using Nonlinearity = std::variant<HartreeTerm, ScaledHartreeTerm, CubicTerm>;

/// i du/dt = -Lap u + V u + lambda * (self-interaction) u on a periodic grid.
struct OneBodyProblem {
  Grid grid;
  ComplexField initial_state;  // unit L2 norm
  ComplexField potential;      // real valued
  Nonlinearity nonlinearity;
  double lambda = 0.0;

  void validate() const {
    if (initial_state.grid != grid || potential.grid != grid)
      throw std::invalid_argument("onebody: fields must share the grid");
    detail::require_sized(initial_state, "onebody initial state");
    detail::require_sized(potential, "onebody potential");
    if (std::abs(norm(initial_state, Norm::L2) - 1.0) > 1e-8)
      throw std::invalid_argument("onebody: initial state must have unit L2 norm");
    for (const auto& v : potential.values)
      if (std::abs(v.imag()) > 1e-12)
        throw std::invalid_argument("onebody: potential must be real");
    if (!std::isfinite(lambda))
      throw std::invalid_argument("onebody: lambda must be finite");
    if (const auto* h = std::get_if<HartreeTerm>(&nonlinearity)) {
      if (h->kernel.grid != grid)
        throw std::invalid_argument("onebody: kernel grid mismatch");
    } else if (const auto* s = std::get_if<ScaledHartreeTerm>(&nonlinearity)) {
      if (s->kernel.grid != grid)
        throw std::invalid_argument("onebody: kernel grid mismatch");
      if (s->particle_number < 1)
        throw std::invalid_argument("onebody: particle number must be >= 1");
    } else if (const auto* c = std::get_if<CubicTerm>(&nonlinearity)) {
      if (!std::isfinite(c->coefficient))
        throw std::invalid_argument("onebody: cubic coefficient must be finite");
    }
  }
};

/// Per-step scalar observables; the CSV row of the trajectory export.
struct StepObservables {
  double t = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
  double energy = 0.0;
  double boundary_mass = 0.0;
};

struct WaveTrajectory {
  std::vector<double> snapshot_times;
  std::vector<ComplexField> snapshots;
  std::vector<StepObservables> observables;  // one entry per step, t=0 first
};

// ---------------------------------------------------------------------------
// Split-step solver

/// Strang splitting: half kinetic phase in spectral space, full potential and
/// self-interaction phase at the mid-step density, half kinetic phase. Every
/// factor is a unit-modulus multiplier, so the L2 norm is conserved to
/// rounding regardless of dt.
class OneBodySolver {
 public:
  explicit OneBodySolver(const OneBodyProblem& problem)
      : grid_(problem.grid),
        dims_(problem.grid.dims()),
        lambda_(problem.lambda) {
    problem.validate();
    const std::size_t size = grid_.size();
    potential_.resize(size);
    for (std::size_t j = 0; j < size; ++j)
      potential_[j] = problem.potential.values[j].real();

    kinetic_.resize(size);
    auto table = detail::frequency_sq_table(grid_);
    for (std::size_t k = 0; k < size; ++k)
      kinetic_[k] =
          4.0 * kPi * kPi * detail::frequency_norm_sq(grid_, table, k);

    if (const auto* h = std::get_if<HartreeTerm>(&problem.nonlinearity))
      build_kernel_multiplier(h->kernel);
    else if (const auto* s =
                 std::get_if<ScaledHartreeTerm>(&problem.nonlinearity))
      build_kernel_multiplier(s->kernel);
    else
      cubic_ = std::get<CubicTerm>(problem.nonlinearity).coefficient;
  }

  const Grid& grid() const { return grid_; }

  /// One Strang step; dt may be negative (exact reversal of a +dt step).
  void advance(ComplexField& u, double dt) {
    kinetic_half(u, dt);
    std::vector<double> nl = interaction_density(u);
    for (std::size_t j = 0; j < u.values.size(); ++j)
      u.values[j] *=
          std::polar(1.0, -dt * (potential_[j] + lambda_ * nl[j]));
    kinetic_half(u, dt);
  }

  /// (w * |u|^2) for Hartree kernels, a |u|^2 for the cubic term.
  std::vector<double> interaction_density(const ComplexField& u) const {
    std::vector<double> rho(u.values.size());
    for (std::size_t j = 0; j < u.values.size(); ++j)
      rho[j] = std::norm(u.values[j]);
    if (!kernel_multiplier_.empty()) {
      std::vector<Complex> buf(rho.begin(), rho.end());
      detail::fft(buf, dims_, FFTW_FORWARD);
      for (std::size_t k = 0; k < buf.size(); ++k)
        buf[k] *= kernel_multiplier_[k];
      detail::fft(buf, dims_, FFTW_BACKWARD);
      for (std::size_t j = 0; j < rho.size(); ++j) rho[j] = buf[j].real();
    } else {
      for (auto& r : rho) r *= cubic_;
    }
    return rho;
  }

  /// E(u) = int |grad u|^2 + int V |u|^2 + (lambda/2) int (w * |u|^2) |u|^2,
  /// the last term (lambda a / 2) int |u|^4 for the cubic variant.
  double energy(const ComplexField& u) const {
    const double h_d = std::pow(grid_.spacing(), grid_.dim());
    std::vector<Complex> buf = u.values;
    detail::fft(buf, dims_, FFTW_FORWARD);
    double kinetic = 0.0;
    for (std::size_t k = 0; k < buf.size(); ++k)
      kinetic += kinetic_[k] * std::norm(buf[k]);
    kinetic *= h_d / static_cast<double>(grid_.size());

    double pot = 0.0;
    for (std::size_t j = 0; j < u.values.size(); ++j)
      pot += potential_[j] * std::norm(u.values[j]);
    pot *= h_d;

    std::vector<double> nl = interaction_density(u);
    double inter = 0.0;
    for (std::size_t j = 0; j < u.values.size(); ++j)
      inter += nl[j] * std::norm(u.values[j]);
    inter *= 0.5 * lambda_ * h_d;
    return kinetic + pot + inter;
  }

 private:
  void build_kernel_multiplier(const ComplexField& kernel) {
    if (kernel.grid != grid_)
      throw std::invalid_argument("onebody: kernel grid mismatch");
    // Multiplier turning FFT[rho] into FFT coefficients of the weighted
    // periodic convolution: conv = BFFT[m . FFT[rho]] with
    // m_k = (-1)^{parity} FFT[w]_k h^d / n^d (recentring phase included).
    std::vector<Complex> what = kernel.values;
    detail::fft(what, dims_, FFTW_FORWARD);
    const double scale = std::pow(grid_.spacing(), grid_.dim()) /
                         static_cast<double>(grid_.size());
    kernel_multiplier_.resize(what.size());
    for (std::size_t k = 0; k < what.size(); ++k) {
      double sign = grid_.index_parity(k) ? -scale : scale;
      // Real even kernels have real transforms; keep the real part so the
      // potential phase stays exactly unit modulus.
      kernel_multiplier_[k] = sign * what[k].real();
    }
  }

  void kinetic_half(ComplexField& u, double dt) {
    if (dt != cached_dt_ || phase_.empty()) {
      cached_dt_ = dt;
      phase_.resize(kinetic_.size());
      const double inv_size = 1.0 / static_cast<double>(grid_.size());
      for (std::size_t k = 0; k < kinetic_.size(); ++k)
        phase_[k] = std::polar(inv_size, -0.5 * dt * kinetic_[k]);
    }
    detail::fft(u.values, dims_, FFTW_FORWARD);
    for (std::size_t k = 0; k < u.values.size(); ++k)
      u.values[k] *= phase_[k];
    detail::fft(u.values, dims_, FFTW_BACKWARD);
  }

  Grid grid_;
  std::vector<int> dims_;
  double lambda_;
  double cubic_ = 0.0;
  std::vector<double> potential_;
  std::vector<double> kinetic_;
  std::vector<double> kernel_multiplier_;  // empty for cubic
  double cached_dt_ = 0.0;
  std::vector<Complex> phase_;
};

/// Single Strang step from an explicit state (test entry point).
inline ComplexField step(const OneBodyProblem& problem, const ComplexField& u,
                         double dt) {
  OneBodySolver solver(problem);
  ComplexField out = u;
  solver.advance(out, dt);
  return out;
}

namespace detail {

inline std::size_t snapshot_step(double t, double dt, long long steps,
                                 const char* what) {
  double k = t / dt;
  long long rounded = std::llround(k);
  if (rounded < 0 || rounded > steps || std::abs(k - rounded) > 1e-6)
    throw std::invalid_argument(std::string(what) +
                                ": snapshot time must be a step multiple "
                                "inside [0, t_max]");
  return static_cast<std::size_t>(rounded);
}

}  // namespace detail

/// Evolve to t_max recording observables every step and snapshots at the
/// requested times (each must be an integer multiple of dt). The Linf guard
/// aborts once the solution exceeds guard_factor times its initial sup.
inline WaveTrajectory evolve(const OneBodyProblem& problem, double t_max,
                             double dt,
                             const std::vector<double>& snapshot_times = {},
                             double guard_factor = 1e6) {
  if (!(dt > 0.0) || !(t_max >= 0.0))
    throw std::invalid_argument("evolve: need t_max >= 0 and dt > 0");
  const long long steps = std::llround(t_max / dt);
  if (std::abs(steps * dt - t_max) > 1e-6)
    throw std::invalid_argument("evolve: t_max must be a multiple of dt");

  OneBodySolver solver(problem);
  std::vector<std::size_t> snap_steps;
  for (double t : snapshot_times)
    snap_steps.push_back(detail::snapshot_step(t, dt, steps, "evolve"));

  WaveTrajectory traj;
  ComplexField u = problem.initial_state;
  const double guard = guard_factor * norm(u, Norm::Linf);
  bool warned = false;

  auto record = [&](long long k) {
    StepObservables obs;
    obs.t = k * dt;
    obs.l2 = norm(u, Norm::L2);
    obs.linf = norm(u, Norm::Linf);
    obs.energy = solver.energy(u);
    obs.boundary_mass = boundary_shell_mass(u);
    if (obs.boundary_mass > kBoundaryMassThreshold && !warned) {
      warned = true;
      std::cerr << "[W] evolve: boundary shell mass " << obs.boundary_mass
                << " at t = " << obs.t
                << " exceeds " << kBoundaryMassThreshold
                << "; the box no longer emulates free space\n";
    }
    traj.observables.push_back(obs);
    for (std::size_t s = 0; s < snap_steps.size(); ++s)
      if (snap_steps[s] == static_cast<std::size_t>(k)) {
        traj.snapshot_times.push_back(k * dt);
        traj.snapshots.push_back(u);
      }
  };

  record(0);
  for (long long k = 1; k <= steps; ++k) {
    solver.advance(u, dt);
    if (norm(u, Norm::Linf) > guard)
      throw BlowupError("onebody evolution blew past the Linf guard at t = " +
                        std::to_string(k * dt));
    record(k);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Decay diagnostics

struct DecaySeries {
  std::vector<double> times;
  std::vector<double> values;
  double running_sup = 0.0;
};

/// (1 + t)^exponent ||u_t||_inf over the per-step observables.
inline DecaySeries measure_decay(const WaveTrajectory& traj, double exponent) {
  if (traj.observables.empty())
    throw std::invalid_argument("measure_decay: empty trajectory");
  DecaySeries s;
  for (const auto& obs : traj.observables) {
    double v = std::pow(1.0 + obs.t, exponent) * obs.linf;
    s.times.push_back(obs.t);
    s.values.push_back(v);
    s.running_sup = std::max(s.running_sup, v);
  }
  return s;
}

/// Same weighting applied to ||du/dt||_inf, estimated by central differences
/// of uniformly spaced snapshots (interior points only).
inline DecaySeries measure_time_derivative_decay(const WaveTrajectory& traj,
                                                 double exponent) {
  const auto& times = traj.snapshot_times;
  if (times.size() < 3)
    throw std::invalid_argument(
        "time derivative decay: needs at least 3 snapshots");
  const double delta = times[1] - times[0];
  for (std::size_t k = 1; k + 1 < times.size(); ++k)
    if (std::abs(times[k + 1] - times[k] - delta) > 1e-9)
      throw std::invalid_argument(
          "time derivative decay: snapshots must be uniformly spaced");
  DecaySeries s;
  for (std::size_t k = 1; k + 1 < times.size(); ++k) {
    const auto& fwd = traj.snapshots[k + 1].values;
    const auto& bwd = traj.snapshots[k - 1].values;
    double sup = 0.0;
    for (std::size_t j = 0; j < fwd.size(); ++j)
      sup = std::max(sup, std::abs(fwd[j] - bwd[j]) / (2.0 * delta));
    double v = std::pow(1.0 + times[k], exponent) * sup;
    s.times.push_back(times[k]);
    s.values.push_back(v);
    s.running_sup = std::max(s.running_sup, v);
  }
  return s;
}

/// Ratios ||exp(-it(-Lap + V)) f||_inf t^{d/2} / ||f||_1 at the given times;
/// bounded ratios witness the linear dispersive estimate, growth flags bound
/// states. f need not be normalized (the ratio is scale invariant).
struct LinearDecayProbe {
  std::vector<double> times;
  std::vector<double> ratios;
  double empirical_constant = 0.0;
};

inline LinearDecayProbe linear_decay_probe(const ComplexField& potential,
                                           const ComplexField& f,
                                           const std::vector<double>& times,
                                           double dt) {
  if (times.empty())
    throw std::invalid_argument("linear decay probe: no sample times");
  for (double t : times)
    if (!(t > 0.0))
      throw std::invalid_argument("linear decay probe: times must be positive");
  const double l1 = norm(f, Norm::L1);
  const double l2 = norm(f, Norm::L2);
  if (!(l1 > 0.0) || !(l2 > 0.0))
    throw std::invalid_argument("linear decay probe: f must be nonzero");

  OneBodyProblem problem{f.grid, f, potential, CubicTerm{0.0}, 0.0};
  for (auto& v : problem.initial_state.values) v /= l2;
  double t_max = *std::max_element(times.begin(), times.end());
  WaveTrajectory traj = evolve(problem, t_max, dt, times);

  LinearDecayProbe probe;
  const double half_dim = 0.5 * f.grid.dim();
  for (std::size_t s = 0; s < traj.snapshot_times.size(); ++s) {
    double t = traj.snapshot_times[s];
    double linf = norm(traj.snapshots[s], Norm::Linf) * l2;
    double ratio = linf * std::pow(t, half_dim) / l1;
    probe.times.push_back(t);
    probe.ratios.push_back(ratio);
    probe.empirical_constant = std::max(probe.empirical_constant, ratio);
  }
  return probe;
}

// ---------------------------------------------------------------------------
// Bootstrap closure

/// Smallest nonnegative root of eps + C x^3 - x = 0, the self-consistent
/// a-priori bound behind the decay argument. Two nonnegative roots exist iff
/// 27 C eps^2 < 4; otherwise there is no bounded closure and the probe
/// returns nothing.
inline std::optional<double> bootstrap_root(double eps, double C) {
  if (!(eps >= 0.0) || !(C >= 0.0))
    throw std::invalid_argument("bootstrap_root: eps and C must be >= 0");
  if (C == 0.0) return eps;
  if (27.0 * C * eps * eps >= 4.0) return std::nullopt;
  if (eps == 0.0) return 0.0;

  auto f = [&](double x) { return eps + C * x * x * x - x; };
  // f decreases through zero on [0, x_min], x_min the stationary point.
  double lo = 0.0, hi = 1.0 / std::sqrt(3.0 * C);
  for (int it = 0; it < 500 && hi - lo > 1e-12; ++it) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Uniform-control functional

/// M(T) = sup_t (1+t)^{d/2} ||u||_inf + sup_t ||D^k u||_2 + ||u(0)||_2 with k
/// the smallest even integer above d/2 (k = 2 for d <= 3), evaluated over the
/// trajectory snapshots. The first snapshot is taken as the initial state.
struct MFunctionalReport {
  double value = 0.0;
  double sup_weighted_linf = 0.0;
  double sup_derivative_l2 = 0.0;
  double initial_l2 = 0.0;
  int derivative_order = 2;
};

inline MFunctionalReport M_functional(const WaveTrajectory& traj, int k) {
  if (traj.snapshots.empty())
    throw std::invalid_argument("M functional: trajectory has no snapshots");
  const Grid& g = traj.snapshots.front().grid;
  int smallest_even = 2;
  while (2 * smallest_even <= g.dim()) smallest_even += 2;
  if (k != smallest_even)
    throw std::invalid_argument(
        "M functional: k must be the smallest even integer above dim/2");
  const double half_dim = 0.5 * g.dim();
  MFunctionalReport rep;
  rep.derivative_order = k;

  auto table = detail::frequency_sq_table(g);
  for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
    double t = traj.snapshot_times[s];
    rep.sup_weighted_linf =
        std::max(rep.sup_weighted_linf,
                 std::pow(1.0 + t, half_dim) *
                     norm(traj.snapshots[s], Norm::Linf));
    ComplexField c = transform_forward(traj.snapshots[s]);
    double acc = 0.0;
    for (std::size_t m = 0; m < c.values.size(); ++m) {
      double sym = 4.0 * kPi * kPi * detail::frequency_norm_sq(g, table, m);
      acc += std::pow(sym, k) * std::norm(c.values[m]);
    }
    rep.sup_derivative_l2 =
        std::max(rep.sup_derivative_l2,
                 std::sqrt(acc / std::pow(g.box_length(), g.dim())));
  }
  rep.initial_l2 = norm(traj.snapshots.front(), Norm::L2);
  rep.value = rep.sup_weighted_linf + rep.sup_derivative_l2 + rep.initial_l2;
  return rep;
}

}  // namespace meanfield

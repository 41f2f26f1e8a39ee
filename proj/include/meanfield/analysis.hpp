#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meanfield/grid.hpp"
#include "meanfield/onebody.hpp"

namespace meanfield {

// ---------------------------------------------------------------------------
// Predicted convergence rates

/// Error exponent of the mean-field approximation in particle number:
/// 1 at beta = 0, min{beta, (1-3 beta)/2} on (0, 1/3). The jump at beta = 0
/// is deliberate (the non-scaled kernel converges faster); the formula
/// collapses to 0 as beta -> 1/3, which is why couplings reject that edge.
inline double theorem_rate(double beta) {
  if (!(beta >= 0.0) || !(beta < 1.0 / 3.0))
    throw std::invalid_argument("theorem_rate: beta must lie in [0, 1/3)");
  if (beta == 0.0) return 1.0;
  return std::min(beta, 0.5 * (1.0 - 3.0 * beta));
}

/// Exponent alpha/2 = beta (gamma-3) / (2 (gamma-2)) available when the
/// kernel decays like |x|^{-gamma}; approaches beta/2 as gamma -> infinity.
inline double alternative_rate(double beta, double gamma) {
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("alternative_rate: beta must be >= 0");
  if (!(gamma > 3.0))
    throw std::invalid_argument("alternative_rate: gamma must exceed 3");
  if (std::isinf(gamma)) return 0.5 * beta;
  return beta * (gamma - 3.0) / (2.0 * (gamma - 2.0));
}

// ---------------------------------------------------------------------------
// Trajectory comparison

struct ComparisonSeries {
  std::vector<double> times;
  std::vector<double> l2_difference;
  double sup = 0.0;
};

/// ||u_t - phi_t||_2 at each requested time, plus the supremum over the
/// window. Both trajectories must carry snapshots at every requested time.
inline ComparisonSeries compare_one_body(const WaveTrajectory& u_traj,
                                         const WaveTrajectory& phi_traj,
                                         const std::vector<double>& times) {
  auto locate = [](const WaveTrajectory& traj, double t) -> std::size_t {
    for (std::size_t s = 0; s < traj.snapshot_times.size(); ++s)
      if (std::abs(traj.snapshot_times[s] - t) < 1e-9) return s;
    throw std::invalid_argument(
        "compare_one_body: no snapshot at t = " + std::to_string(t));
  };

  ComparisonSeries series;
  for (double t : times) {
    const ComplexField& u = u_traj.snapshots[locate(u_traj, t)];
    const ComplexField& phi = phi_traj.snapshots[locate(phi_traj, t)];
    if (u.grid != phi.grid)
      throw std::invalid_argument("compare_one_body: grid mismatch");
    ComplexField diff = u;
    for (std::size_t j = 0; j < diff.values.size(); ++j)
      diff.values[j] -= phi.values[j];
    double d = norm(diff, Norm::L2);
    series.times.push_back(t);
    series.l2_difference.push_back(d);
    series.sup = std::max(series.sup, d);
  }
  return series;
}

// ---------------------------------------------------------------------------
// Rate fitting

struct RateFit {
  double exponent = 0.0;  // error ~ N^{exponent}; negative when improving
  double intercept = 0.0;
  double residual_rms = 0.0;
  std::vector<std::pair<double, double>> sample_points;  // (N, error)
};

/// Least squares of log(error) against log(N). Requires at least three
/// distinct N and strictly positive errors.
inline RateFit fit_rate(
    const std::vector<std::pair<double, double>>& samples) {
  std::vector<double> ns;
  for (const auto& [n, err] : samples) {
    if (!(n > 0.0))
      throw std::invalid_argument("fit_rate: N values must be positive");
    if (!(err > 0.0))
      throw std::invalid_argument(
          "fit_rate: errors must be positive (log scale)");
    if (std::find(ns.begin(), ns.end(), n) == ns.end()) ns.push_back(n);
  }
  if (ns.size() < 3)
    throw std::invalid_argument("fit_rate: need >= 3 distinct N values");

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double count = static_cast<double>(samples.size());
  for (const auto& [n, err] : samples) {
    double x = std::log(n), y = std::log(err);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = count * sxx - sx * sx;
  RateFit fit;
  fit.exponent = (count * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.exponent * sx) / count;
  double ss = 0.0;
  for (const auto& [n, err] : samples) {
    double r = std::log(err) - (fit.intercept + fit.exponent * std::log(n));
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / count);
  fit.sample_points = samples;
  return fit;
}

// ---------------------------------------------------------------------------
// Integral-inequality certificate

struct GroenwallCertificate {
  std::vector<double> time_nodes;
  std::vector<double> alpha_values;
  std::vector<double> eps_values;
  std::vector<double> bound_values;
  double phi0 = 0.0;
};

/// Discrete right-hand side of phi(t) <= e^{A(t)} phi0 +
/// int_0^t e^{A(t)-A(s)} eps(s) ds with A the cumulative trapezoid integral
/// of alpha from the first node. Written as e^{A(t)} (phi0 +
/// int e^{-A} eps) so one forward pass suffices.
inline GroenwallCertificate groenwall_bound(
    const std::function<double(double)>& alpha,
    const std::function<double(double)>& eps, double phi0,
    const std::vector<double>& time_nodes) {
  if (time_nodes.size() < 2)
    throw std::invalid_argument("groenwall_bound: need >= 2 time nodes");
  for (std::size_t k = 1; k < time_nodes.size(); ++k)
    if (!(time_nodes[k] > time_nodes[k - 1]))
      throw std::invalid_argument(
          "groenwall_bound: nodes must be strictly increasing");
  if (!(phi0 >= 0.0))
    throw std::invalid_argument("groenwall_bound: phi0 must be >= 0");

  GroenwallCertificate cert;
  cert.phi0 = phi0;
  cert.time_nodes = time_nodes;
  const std::size_t n = time_nodes.size();
  cert.alpha_values.resize(n);
  cert.eps_values.resize(n);
  cert.bound_values.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    cert.alpha_values[k] = alpha(time_nodes[k]);
    cert.eps_values[k] = eps(time_nodes[k]);
  }

  double a_accum = 0.0;     // A(t_k)
  double weighted = 0.0;    // int_0^{t_k} e^{-A(s)} eps(s) ds
  double prev_integrand = cert.eps_values[0];  // e^{-A(0)} eps(0), A(0) = 0
  cert.bound_values[0] = phi0 + 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const double dt = time_nodes[k] - time_nodes[k - 1];
    a_accum += 0.5 * dt * (cert.alpha_values[k - 1] + cert.alpha_values[k]);
    const double integrand = std::exp(-a_accum) * cert.eps_values[k];
    weighted += 0.5 * dt * (prev_integrand + integrand);
    prev_integrand = integrand;
    cert.bound_values[k] = std::exp(a_accum) * (phi0 + weighted);
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Uniform-in-time check

struct UniformityReport {
  double sup_early = 0.0;
  double sup_late = 0.0;
  bool uniform = true;
};

/// Splits the series at split * T (T the final time) and compares suprema:
/// uniform when the late supremum does not exceed tolerance_factor times the
/// early one, i.e. the quantity is not building up over the window.
inline UniformityReport uniformity_check(
    const std::vector<std::pair<double, double>>& series, double split,
    double tolerance_factor = 1.5) {
  if (series.empty())
    throw std::invalid_argument("uniformity_check: empty series");
  if (!(split > 0.0) || !(split < 1.0))
    throw std::invalid_argument("uniformity_check: split must be in (0, 1)");
  if (!(tolerance_factor > 0.0))
    throw std::invalid_argument(
        "uniformity_check: tolerance factor must be positive");

  const double horizon = series.back().first;
  const double cut = split * horizon;
  UniformityReport report;
  for (const auto& [t, value] : series) {
    if (t <= cut)
      report.sup_early = std::max(report.sup_early, value);
    else
      report.sup_late = std::max(report.sup_late, value);
  }
  report.uniform = report.sup_late <= tolerance_factor * report.sup_early;
  return report;
}

}  // namespace meanfield

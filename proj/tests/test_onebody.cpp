#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "meanfield/grid.hpp"
#include "meanfield/onebody.hpp"
#include "meanfield/potentials.hpp"
#include "oracles.hpp"

using namespace meanfield;

namespace {

ComplexField normalized_gaussian(const Grid& g, double a) {
  ComplexField u = oracles::gaussian_state(g, a);
  double l2 = norm(u, Norm::L2);
  for (auto& v : u.values) v /= l2;
  return u;
}

OneBodyProblem make_problem(const Grid& g, ComplexField u0, ComplexField v,
                            Nonlinearity nl, double lambda) {
  return OneBodyProblem{g, std::move(u0), std::move(v), std::move(nl), lambda};
}

OneBodyProblem free_problem(const Grid& g, double a) {
  return make_problem(g, normalized_gaussian(g, a), make_field(g),
                      CubicTerm{0.0}, 0.0);
}

}  // namespace

TEST_CASE("free evolution reproduces the dispersing Gaussian closed form") {
  Grid g = make_grid(1, 1024, 256.0);
  const double a = 1.0 / 16.0;
  OneBodyProblem p = free_problem(g, a);

  WaveTrajectory traj = evolve(p, 1.0, 1e-3, {1.0});
  REQUIRE(traj.snapshots.size() == 1);

  ComplexField exact = oracles::free_gaussian_exact(g, a, 1.0);
  ComplexField diff = traj.snapshots[0];
  for (std::size_t j = 0; j < g.size(); ++j) diff.values[j] -= exact.values[j];
  // The splitting is exact for the free flow; only rounding remains.
  CHECK(norm(diff, Norm::L2) < 1e-10);
}

TEST_CASE("constant potential shift acts as a pure gauge phase") {
  Grid g = make_grid(1, 256, 32.0);
  OneBodyProblem p = make_problem(
      g, normalized_gaussian(g, 0.5),
      sample_potential({PotentialFamily::gaussian_bump, -0.4, 2.0, {0.0}}, g),
      CubicTerm{0.3}, 1.0);

  OneBodyProblem shifted = p;
  const double c = 0.7;
  for (auto& v : shifted.potential.values) v += c;

  const double t = 0.5;
  WaveTrajectory base = evolve(p, t, 1e-3, {t});
  WaveTrajectory gauge = evolve(shifted, t, 1e-3, {t});

  const Complex phase = std::polar(1.0, -c * t);
  double err = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    err = std::max(err, std::abs(gauge.snapshots[0].values[j] -
                                 phase * base.snapshots[0].values[j]));
  }
  CHECK(err < 1e-12);
}

TEST_CASE("mass and energy are conserved over long Hartree runs") {
  Grid g = make_grid(1, 2048, 256.0);
  OneBodyProblem p = make_problem(
      g, normalized_gaussian(g, 0.25),
      sample_potential({PotentialFamily::gaussian_bump, -0.1, 2.0, {0.0}}, g),
      HartreeTerm{sample_interaction({InteractionFamily::gaussian, 1.0, 1.0}, g)},
      0.2);

  WaveTrajectory traj = evolve(p, 10.0, 1e-3);
  REQUIRE(traj.observables.size() == 10001);

  const double m0 = traj.observables.front().l2;
  const double e0 = traj.observables.front().energy;
  double mass_drift = 0.0;
  double energy_drift = 0.0;
  for (const auto& o : traj.observables) {
    mass_drift = std::max(mass_drift, std::abs(o.l2 - m0));
    energy_drift = std::max(energy_drift, std::abs(o.energy - e0));
  }
  CHECK(mass_drift < 1e-9);
  CHECK(energy_drift < 1e-4);
}

TEST_CASE("plane wave kinetic energy matches its dispersion value") {
  Grid g = make_grid(1, 64, 16.0);
  const int k = 3;
  const double xi = static_cast<double>(k) / g.box_length();
  ComplexField u = make_field(g);
  const double amp = 1.0 / std::sqrt(g.box_length());
  for (std::size_t j = 0; j < g.size(); ++j) {
    double x = g.coordinate(static_cast<int>(j));
    u.values[j] = amp * std::polar(1.0, 2.0 * kPi * xi * x);
  }
  OneBodyProblem p = make_problem(g, u, make_field(g), CubicTerm{0.0}, 0.0);

  OneBodySolver solver(p);
  const double expected = 4.0 * kPi * kPi * xi * xi;
  CHECK(std::abs(solver.energy(u) - expected) < 1e-10 * expected);
}

TEST_CASE("initial energy of a Gaussian matches closed forms") {
  Grid g = make_grid(1, 1024, 64.0);
  const double a = 0.5;
  ComplexField u = normalized_gaussian(g, a);

  SECTION("pure kinetic part equals pi a in one dimension") {
    OneBodyProblem p = free_problem(g, a);
    OneBodySolver solver(p);
    CHECK(std::abs(solver.energy(u) - kPi * a) < 1e-10);
  }

  SECTION("cubic part adds lambda a_c sqrt(a) / 2") {
    const double lambda = 0.3;
    const double a_c = 0.8;
    OneBodyProblem p = free_problem(g, a);
    p.nonlinearity = CubicTerm{a_c};
    p.lambda = lambda;
    OneBodySolver solver(p);
    const double expected = kPi * a + 0.5 * lambda * a_c * std::sqrt(a);
    CHECK(std::abs(solver.energy(u) - expected) < 1e-10);
  }
}

TEST_CASE("energy agrees with a finite-difference and direct-sum oracle") {
  Grid g = make_grid(1, 512, 32.0);
  const double a = 1.0;
  ComplexField u = normalized_gaussian(g, a);

  ComplexField w = sample_interaction({InteractionFamily::gaussian, 0.5, 1.0}, g);
  OneBodyProblem p = make_problem(
      g, u,
      sample_potential({PotentialFamily::gaussian_bump, 0.3, 1.5, {0.0}}, g),
      HartreeTerm{w}, 0.4);
  OneBodySolver solver(p);

  const double h = g.spacing();
  const std::size_t n = g.size();
  // Kinetic term via the second difference |u'|^2 ~ -Re(conj(u) u'').
  double kinetic = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    Complex lap = (u.values[(j + 1) % n] - 2.0 * u.values[j] +
                   u.values[(j + n - 1) % n]) /
                  (h * h);
    kinetic -= std::real(std::conj(u.values[j]) * lap) * h;
  }
  double potential = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    potential += std::real(p.potential.values[j]) * std::norm(u.values[j]) * h;
  }
  ComplexField rho = make_field(g);
  for (std::size_t j = 0; j < n; ++j) rho.values[j] = std::norm(u.values[j]);
  ComplexField conv = oracles::direct_convolution(w, rho);
  double interaction = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    interaction += std::real(conv.values[j]) * std::norm(u.values[j]) * h;
  }
  const double oracle = kinetic + potential + 0.5 * p.lambda * interaction;

  CHECK(std::abs(solver.energy(u) - oracle) < 0.05 * std::abs(oracle));
}

TEST_CASE("time stepping converges at second order in dt") {
  Grid g = make_grid(1, 256, 32.0);
  OneBodyProblem p = make_problem(
      g, normalized_gaussian(g, 0.25),
      sample_potential({PotentialFamily::gaussian_bump, -0.3, 2.0, {0.0}}, g),
      CubicTerm{1.0}, 0.5);

  const double t = 0.5;
  WaveTrajectory ref = evolve(p, t, 1.25e-4, {t});
  std::vector<double> dts = {4e-3, 2e-3, 1e-3};
  std::vector<double> errs;
  for (double dt : dts) {
    WaveTrajectory traj = evolve(p, t, dt, {t});
    ComplexField diff = traj.snapshots[0];
    for (std::size_t j = 0; j < g.size(); ++j)
      diff.values[j] -= ref.snapshots[0].values[j];
    errs.push_back(norm(diff, Norm::L2));
  }
  const double p1 = std::log2(errs[0] / errs[1]);
  const double p2 = std::log2(errs[1] / errs[2]);
  CHECK(p1 > 1.8);
  CHECK(p1 < 2.2);
  CHECK(p2 > 1.8);
  CHECK(p2 < 2.2);
}

TEST_CASE("evolution is time reversible") {
  Grid g = make_grid(1, 256, 32.0);
  OneBodyProblem p = make_problem(
      g, normalized_gaussian(g, 0.5),
      sample_potential({PotentialFamily::sech_squared_well, -0.6, 1.5, {0.0}}, g),
      CubicTerm{1.0}, 0.5);

  OneBodySolver solver(p);
  ComplexField u = p.initial_state;
  const int steps = 500;
  for (int s = 0; s < steps; ++s) solver.advance(u, 1e-3);
  for (int s = 0; s < steps; ++s) solver.advance(u, -1e-3);

  double err = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j)
    err = std::max(err, std::abs(u.values[j] - p.initial_state.values[j]));
  CHECK(err < 1e-8);
}

TEST_CASE("amplitude guard raises BlowupError on a focusing chirp") {
  Grid g = make_grid(1, 4096, 32.0);
  const double a = 1.0;
  const double b = 16.0;
  ComplexField u = make_field(g);
  const double amp = std::pow(2.0 * a, 0.25);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double x = g.coordinate(static_cast<int>(j));
    // e^{-pi(a+ib)x^2}: unit mass, contracting; peak grows by sqrt(b/a)=4.
    u.values[j] = amp * std::exp(Complex(-kPi * a * x * x, -kPi * b * x * x));
  }
  OneBodyProblem p = make_problem(g, u, make_field(g), CubicTerm{0.0}, 0.0);

  CHECK_THROWS_AS(evolve(p, 0.006, 1e-4, {}, 3.0), BlowupError);
  // The default guard is far looser and lets the same run finish.
  CHECK_NOTHROW(evolve(p, 0.006, 1e-4));
}

TEST_CASE("weighted decay series matches the analytic dispersive envelope") {
  Grid g = make_grid(1, 2048, 512.0);
  const double a = 0.25;
  OneBodyProblem p = free_problem(g, a);
  WaveTrajectory traj = evolve(p, 20.0, 0.01);

  const double e = 0.5;
  DecaySeries series = measure_decay(traj, e);
  REQUIRE(series.times.size() == traj.observables.size());

  // Lattice sup of the free Gaussian is attained at the origin gridpoint.
  double sup = 0.0;
  for (std::size_t k = 0; k < series.times.size(); ++k) {
    const double t = series.times[k];
    const double mod_z = std::hypot(1.0, 4.0 * kPi * a * t);
    const double linf = std::pow(2.0 * a, 0.25) / std::sqrt(mod_z);
    const double expected = std::pow(1.0 + t, e) * linf;
    sup = std::max(sup, expected);
    CHECK(std::abs(series.values[k] - expected) < 1e-8);
  }
  CHECK(std::abs(series.running_sup - sup) < 1e-8);
  // The weighted envelope peaks near t = 1/pi^2 before decaying, so the
  // running sup slightly exceeds the initial value.
  CHECK(series.running_sup > series.values.front());
  CHECK(series.running_sup < 1.05 * series.values.front());
}

TEST_CASE("time-derivative decay series matches differenced closed forms") {
  Grid g = make_grid(1, 1024, 256.0);
  const double a = 0.25;
  OneBodyProblem p = free_problem(g, a);

  std::vector<double> times;
  for (int k = 0; k <= 16; ++k) times.push_back(1.0 + 0.125 * k);
  WaveTrajectory traj = evolve(p, 3.0, 1.25e-3, times);

  const double e = 0.5;
  DecaySeries series = measure_time_derivative_decay(traj, e);
  REQUIRE(series.times.size() == times.size() - 2);

  for (std::size_t k = 0; k + 2 < times.size(); ++k) {
    const double t = times[k + 1];
    const double dt = times[k + 2] - times[k];
    // Same centered difference evaluated on exact snapshots.
    ComplexField hi = oracles::free_gaussian_exact(g, a, times[k + 2]);
    ComplexField lo = oracles::free_gaussian_exact(g, a, times[k]);
    double fd_linf = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      fd_linf = std::max(fd_linf,
                         std::abs((hi.values[j] - lo.values[j]) / dt));
    }
    const double expected = std::pow(1.0 + t, e) * fd_linf;
    CHECK(std::abs(series.values[k] - expected) < 1e-8);

    // And the difference quotient sits near the true time derivative.
    ComplexField du = oracles::free_gaussian_exact_dt(g, a, t);
    CHECK(std::abs(series.values[k] -
                   std::pow(1.0 + t, e) * norm(du, Norm::Linf)) <
          0.1 * series.values[k]);
  }
}

TEST_CASE("time-derivative decay rejects unusable snapshot layouts") {
  Grid g = make_grid(1, 256, 64.0);
  OneBodyProblem p = free_problem(g, 0.5);

  WaveTrajectory two = evolve(p, 1.0, 0.01, {0.0, 1.0});
  CHECK_THROWS_AS(measure_time_derivative_decay(two, 0.5), std::invalid_argument);

  WaveTrajectory uneven = evolve(p, 1.0, 0.01, {0.0, 0.25, 1.0});
  CHECK_THROWS_AS(measure_time_derivative_decay(uneven, 0.5), std::invalid_argument);
}

TEST_CASE("linear decay probe recovers the free propagator constant") {
  Grid g = make_grid(1, 4096, 512.0);
  ComplexField f = make_field(g);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double x = g.coordinate(static_cast<int>(j));
    f.values[j] = 3.0 * std::exp(-kPi * x * x);
  }
  ComplexField v = make_field(g);

  LinearDecayProbe probe = linear_decay_probe(v, f, {2.0, 4.0, 8.0}, 0.01);
  REQUIRE(probe.ratios.size() == 3);
  const double free_constant = std::pow(4.0 * kPi, -0.5);
  CHECK(std::abs(probe.ratios.back() - free_constant) < 3e-3);
  CHECK(probe.empirical_constant >= probe.ratios.back());

  // The normalized ratio is invariant under rescaling the input profile.
  ComplexField f2 = f;
  for (auto& z : f2.values) z *= 0.2;
  LinearDecayProbe probe2 = linear_decay_probe(v, f2, {2.0, 4.0, 8.0}, 0.01);
  CHECK(std::abs(probe2.ratios.back() - probe.ratios.back()) < 1e-10);
}

TEST_CASE("linear decay probe flags a binding well via ratio growth") {
  Grid g = make_grid(1, 8192, 1024.0);
  ComplexField f = make_field(g);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double x = g.coordinate(static_cast<int>(j));
    f.values[j] = std::exp(-kPi * x * x);
  }
  ComplexField v =
      sample_potential({PotentialFamily::sech_squared_well, -1.0, 2.0, {0.0}}, g);

  LinearDecayProbe probe = linear_decay_probe(v, f, {2.0, 16.0}, 0.01);
  // The bound-state component does not decay, so t^{1/2}|u|_inf grows.
  CHECK(probe.ratios.back() > 1.5 * probe.ratios.front());
}

TEST_CASE("bootstrap root finder solves eps + C x^3 = x") {
  SECTION("reference value") {
    auto root = bootstrap_root(0.1, 8.0);
    REQUIRE(root.has_value());
    CHECK(std::abs(*root - 0.110916) < 1e-5);
    // It solves the fixed-point equation...
    CHECK(std::abs(0.1 + 8.0 * std::pow(*root, 3) - *root) < 1e-10);
    // ...and is the smallest nonnegative solution: the map stays above x
    // strictly below the root.
    for (double x = 0.0; x < *root - 1e-6; x += *root / 64.0) {
      CHECK(0.1 + 8.0 * x * x * x > x);
    }
  }

  SECTION("degenerate and failing regimes") {
    auto linear = bootstrap_root(0.2, 0.0);
    REQUIRE(linear.has_value());
    CHECK(*linear == Catch::Approx(0.2));

    auto zero = bootstrap_root(0.0, 5.0);
    REQUIRE(zero.has_value());
    CHECK(*zero == 0.0);

    // 27 C eps^2 >= 4 means the line never re-crosses the cubic.
    CHECK_FALSE(bootstrap_root(0.2, 8.0).has_value());
    CHECK_FALSE(bootstrap_root(1.0, 4.0 / 27.0).has_value());

    CHECK_THROWS_AS(bootstrap_root(-0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(bootstrap_root(0.1, -1.0), std::invalid_argument);
  }
}

TEST_CASE("well-posedness functional matches its Gaussian closed form") {
  Grid g = make_grid(1, 1024, 64.0);
  const double a = 0.5;
  OneBodyProblem p = free_problem(g, a);
  WaveTrajectory traj = evolve(p, 0.0, 1e-3, {0.0});

  MFunctionalReport report = M_functional(traj, 2);
  const double expected = std::pow(2.0 * a, 0.25) + std::sqrt(3.0) * kPi * a + 1.0;
  CHECK(std::abs(report.value - expected) < 1e-8);
  CHECK(report.derivative_order == 2);
  CHECK(std::abs(report.initial_l2 - 1.0) < 1e-10);

  // k must be the smallest even integer above dim/2, i.e. 2 for dim <= 3.
  CHECK_THROWS_AS(M_functional(traj, 4), std::invalid_argument);
  CHECK_THROWS_AS(M_functional(traj, 1), std::invalid_argument);
}

TEST_CASE("well-posedness functional vanishes on the zero field and grows with the window") {
  Grid g = make_grid(1, 256, 64.0);

  WaveTrajectory zero;
  zero.snapshot_times = {0.0};
  zero.snapshots = {make_field(g)};
  CHECK(M_functional(zero, 2).value == 0.0);

  OneBodyProblem p = free_problem(g, 0.25);
  WaveTrajectory traj = evolve(p, 2.0, 1e-2, {0.0, 1.0, 2.0});
  WaveTrajectory shorter = traj;
  shorter.snapshot_times.pop_back();
  shorter.snapshots.pop_back();
  CHECK(M_functional(traj, 2).value >= M_functional(shorter, 2).value);
}

TEST_CASE("one step of dt matches two steps of dt/2 to third order") {
  Grid g = make_grid(1, 256, 32.0);
  OneBodyProblem p = make_problem(g, normalized_gaussian(g, 1.0), make_field(g),
                                  CubicTerm{1.0}, 1.0);

  std::vector<double> dts = {2e-3, 1e-3, 5e-4};
  std::vector<double> errs;
  for (double dt : dts) {
    ComplexField one = step(p, p.initial_state, dt);
    ComplexField two = step(p, p.initial_state, 0.5 * dt);
    OneBodyProblem mid = p;
    mid.initial_state = two;
    two = step(mid, two, 0.5 * dt);
    ComplexField diff = one;
    for (std::size_t j = 0; j < g.size(); ++j) diff.values[j] -= two.values[j];
    errs.push_back(norm(diff, Norm::L2));
  }
  CHECK(std::log2(errs[0] / errs[1]) > 2.7);
  CHECK(std::log2(errs[1] / errs[2]) > 2.7);
}

TEST_CASE("cubic dynamics is the narrow-kernel limit of Hartree dynamics") {
  Grid g = make_grid(1, 1024, 64.0);
  const double mass = 0.8;
  OneBodyProblem cubic = make_problem(g, normalized_gaussian(g, 0.5),
                                      make_field(g), CubicTerm{mass}, 0.1);

  OneBodyProblem hartree = cubic;
  hartree.nonlinearity = HartreeTerm{sample_interaction(
      {InteractionFamily::delta_limit, mass, 2.0 * g.spacing()}, g)};

  WaveTrajectory a = evolve(cubic, 1.0, 1e-3, {1.0});
  WaveTrajectory b = evolve(hartree, 1.0, 1e-3, {1.0});
  ComplexField diff = a.snapshots[0];
  for (std::size_t j = 0; j < g.size(); ++j)
    diff.values[j] -= b.snapshots[0].values[j];
  CHECK(norm(diff, Norm::L2) < 5e-3);
}

TEST_CASE("solver construction and evolve reject malformed problems") {
  Grid g = make_grid(1, 64, 16.0);
  OneBodyProblem p = free_problem(g, 0.5);

  SECTION("non-normalized initial state") {
    OneBodyProblem bad = p;
    for (auto& v : bad.initial_state.values) v *= 2.0;
    CHECK_THROWS_AS(OneBodySolver(bad), std::invalid_argument);
  }

  SECTION("potential with an imaginary part") {
    OneBodyProblem bad = p;
    bad.potential.values[3] = Complex(0.0, 1e-3);
    CHECK_THROWS_AS(OneBodySolver(bad), std::invalid_argument);
  }

  SECTION("interaction kernel on a different grid") {
    OneBodyProblem bad = p;
    Grid other = make_grid(1, 128, 16.0);
    bad.nonlinearity = HartreeTerm{
        sample_interaction({InteractionFamily::gaussian, 1.0, 1.0}, other)};
    CHECK_THROWS_AS(OneBodySolver(bad), std::invalid_argument);
  }

  SECTION("bad time parameters") {
    CHECK_THROWS_AS(evolve(p, -1.0, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(evolve(p, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(evolve(p, 1.0, 3e-3), std::invalid_argument);
    CHECK_THROWS_AS(evolve(p, 1.0, 1e-1, {0.37}), std::invalid_argument);
  }

  SECTION("zero-length run still records the initial state") {
    WaveTrajectory traj = evolve(p, 0.0, 1e-3, {0.0});
    REQUIRE(traj.observables.size() == 1);
    REQUIRE(traj.snapshots.size() == 1);
    CHECK(traj.observables[0].t == 0.0);
  }
}

#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <functional>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "meanfield/analysis.hpp"
#include "meanfield/errors.hpp"
#include "meanfield/grid.hpp"
#include "meanfield/manybody.hpp"
#include "meanfield/onebody.hpp"
#include "meanfield/potentials.hpp"

namespace meanfield {

inline constexpr const char* kSoftwareVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Experiment configuration

enum class ExperimentKind {
  dispersive,
  linear_decay,
  rollnik,
  rate_sweep,
  manybody_trace,
  groenwall_cert,
  bootstrap,
};

inline const char* experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::dispersive: return "dispersive";
    case ExperimentKind::linear_decay: return "linear-decay";
    case ExperimentKind::rollnik: return "rollnik";
    case ExperimentKind::rate_sweep: return "rate-sweep";
    case ExperimentKind::manybody_trace: return "manybody-trace";
    case ExperimentKind::groenwall_cert: return "groenwall-cert";
    case ExperimentKind::bootstrap: return "bootstrap";
  }
  return "unknown";
}

inline bool experiment_from_name(const std::string& name,
                                 ExperimentKind& out) {
  for (ExperimentKind kind :
       {ExperimentKind::dispersive, ExperimentKind::linear_decay,
        ExperimentKind::rollnik, ExperimentKind::rate_sweep,
        ExperimentKind::manybody_trace, ExperimentKind::groenwall_cert,
        ExperimentKind::bootstrap}) {
    if (name == experiment_name(kind)) {
      out = kind;
      return true;
    }
  }
  return false;
}

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::dispersive;
  int dim = 1;
  int grid_points = 0;
  double box_length = 0.0;
  double initial_width = 0.25;  // gaussian falloff a of the initial state
  PotentialSpec potential;
  InteractionSpec interaction;
  CouplingConfig coupling;
  std::vector<int> sweep_n;
  std::vector<double> sweep_beta;
  double t_max = -1.0;
  double dt = 1e-3;
  int snapshot_stride = 100;
  std::string output_dir = "results";
  long long seed = 0;
  // Certificate profiles alpha(t) = alpha_const (1+t)^{-alpha_power},
  // eps(t) = eps_const (1+t)^{-eps_power}.
  double alpha_const = 1.0;
  double alpha_power = 3.0;
  double eps_const = 1.0;
  double eps_power = 3.0;
  double phi0 = 0.1;
  // Closed-loop inequality eps + C x^3 >= x inputs.
  double bootstrap_eps = 0.1;
  double bootstrap_c = 8.0;
};

// ---------------------------------------------------------------------------
// Config parsing: INI-style sections of key = value lines, comments with
// '#' or ';'. Unknown keys, unknown sections and duplicates are hard errors.

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string token;
  for (char c : s) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else {
      token.push_back(c);
    }
  }
  if (!token.empty()) out.push_back(token);
  return out;
}

inline bool to_double(const std::string& s, double& out) {
  if (s == "inf" || s == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end != begin && *end == '\0';
}

inline bool to_long(const std::string& s, long long& out) {
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtoll(begin, &end, 10);
  return end != begin && *end == '\0';
}

/// Collects field-level errors so a bad config reports every problem at
/// once rather than one per run attempt.
struct ConfigReader {
  std::map<std::string, std::string> pairs;  // "section.key" -> value
  std::vector<std::string> errors;
  std::set<std::string> consumed;

  void fail(const std::string& message) { errors.push_back(message); }

  bool take(const std::string& full_key, std::string& out) {
    auto it = pairs.find(full_key);
    if (it == pairs.end()) return false;
    consumed.insert(full_key);
    out = it->second;
    return true;
  }

  void read_double(const std::string& key, double& field) {
    std::string raw;
    if (!take(key, raw)) return;
    if (!to_double(raw, field))
      fail("key '" + key + "': expected a number, got '" + raw + "'");
  }

  void read_int(const std::string& key, int& field) {
    std::string raw;
    if (!take(key, raw)) return;
    long long v = 0;
    if (!to_long(raw, v) || v > std::numeric_limits<int>::max() ||
        v < std::numeric_limits<int>::min())
      fail("key '" + key + "': expected an integer, got '" + raw + "'");
    else
      field = static_cast<int>(v);
  }

  void read_long(const std::string& key, long long& field) {
    std::string raw;
    if (!take(key, raw)) return;
    if (!to_long(raw, field))
      fail("key '" + key + "': expected an integer, got '" + raw + "'");
  }

  void read_string(const std::string& key, std::string& field) {
    std::string raw;
    if (take(key, raw)) field = raw;
  }

  void read_double_list(const std::string& key, std::vector<double>& field) {
    std::string raw;
    if (!take(key, raw)) return;
    field.clear();
    for (const std::string& tok : split_list(raw)) {
      double v = 0.0;
      if (!to_double(tok, v)) {
        fail("key '" + key + "': expected numbers, got '" + tok + "'");
        return;
      }
      field.push_back(v);
    }
  }

  void read_int_list(const std::string& key, std::vector<int>& field) {
    std::string raw;
    if (!take(key, raw)) return;
    field.clear();
    for (const std::string& tok : split_list(raw)) {
      long long v = 0;
      if (!to_long(tok, v)) {
        fail("key '" + key + "': expected integers, got '" + tok + "'");
        return;
      }
      field.push_back(static_cast<int>(v));
    }
  }
};

inline void scan_pairs(const std::string& text, ConfigReader& reader) {
  std::istringstream stream(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        reader.fail("line " + std::to_string(line_no) +
                    ": unterminated section header");
        continue;
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      reader.fail("line " + std::to_string(line_no) +
                  ": expected 'key = value'");
      continue;
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      reader.fail("line " + std::to_string(line_no) + ": empty key");
      continue;
    }
    std::string full = section.empty() ? key : section + "." + key;
    if (reader.pairs.count(full)) {
      reader.fail("duplicate key '" + full + "'");
      continue;
    }
    reader.pairs[full] = value;
  }
}

inline bool potential_family_from_name(const std::string& name,
                                       PotentialFamily& out) {
  if (name == "zero") out = PotentialFamily::zero;
  else if (name == "gaussian_bump") out = PotentialFamily::gaussian_bump;
  else if (name == "sech_squared_well") out = PotentialFamily::sech_squared_well;
  else if (name == "cosine_bump") out = PotentialFamily::cosine_bump;
  else return false;
  return true;
}

inline bool interaction_family_from_name(const std::string& name,
                                         InteractionFamily& out) {
  if (name == "gaussian") out = InteractionFamily::gaussian;
  else if (name == "compact_bump") out = InteractionFamily::compact_bump;
  else if (name == "delta_limit") out = InteractionFamily::delta_limit;
  else return false;
  return true;
}

inline const char* potential_family_name(PotentialFamily f) {
  switch (f) {
    case PotentialFamily::zero: return "zero";
    case PotentialFamily::gaussian_bump: return "gaussian_bump";
    case PotentialFamily::sech_squared_well: return "sech_squared_well";
    case PotentialFamily::cosine_bump: return "cosine_bump";
  }
  return "unknown";
}

inline const char* interaction_family_name(InteractionFamily f) {
  switch (f) {
    case InteractionFamily::gaussian: return "gaussian";
    case InteractionFamily::compact_bump: return "compact_bump";
    case InteractionFamily::delta_limit: return "delta_limit";
  }
  return "unknown";
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  detail::ConfigReader reader;
  detail::scan_pairs(text, reader);
  ExperimentConfig cfg;

  std::string raw;
  if (reader.take("experiment", raw)) {
    if (!experiment_from_name(raw, cfg.experiment))
      reader.fail("unknown experiment '" + raw + "'");
  } else {
    reader.fail("missing required key 'experiment'");
  }
  reader.read_int("dim", cfg.dim);
  reader.read_int("grid_points", cfg.grid_points);
  reader.read_double("box_length", cfg.box_length);
  reader.read_double("initial_width", cfg.initial_width);
  reader.read_double("t_max", cfg.t_max);
  reader.read_double("dt", cfg.dt);
  reader.read_int("snapshot_stride", cfg.snapshot_stride);
  reader.read_string("output_dir", cfg.output_dir);
  reader.read_long("seed", cfg.seed);

  if (reader.take("potential.family", raw)) {
    if (!detail::potential_family_from_name(raw, cfg.potential.family))
      reader.fail("key 'potential.family': unknown family '" + raw + "'");
  }
  reader.read_double("potential.amplitude", cfg.potential.amplitude);
  reader.read_double("potential.width", cfg.potential.width);
  reader.read_double_list("potential.center", cfg.potential.center);

  if (reader.take("interaction.family", raw)) {
    if (!detail::interaction_family_from_name(raw, cfg.interaction.family))
      reader.fail("key 'interaction.family': unknown family '" + raw + "'");
  }
  reader.read_double("interaction.amplitude", cfg.interaction.amplitude);
  reader.read_double("interaction.width", cfg.interaction.width);
  reader.read_double("interaction.decay_exponent",
                     cfg.interaction.decay_exponent);
  reader.read_double("interaction.decay_constant",
                     cfg.interaction.decay_constant);

  reader.read_double("coupling.lambda", cfg.coupling.lambda);
  reader.read_double("coupling.beta", cfg.coupling.beta);
  reader.read_int("coupling.particle_number", cfg.coupling.particle_number);

  reader.read_int_list("sweep.n", cfg.sweep_n);
  reader.read_double_list("sweep.beta", cfg.sweep_beta);

  reader.read_double("groenwall.alpha_const", cfg.alpha_const);
  reader.read_double("groenwall.alpha_power", cfg.alpha_power);
  reader.read_double("groenwall.eps_const", cfg.eps_const);
  reader.read_double("groenwall.eps_power", cfg.eps_power);
  reader.read_double("groenwall.phi0", cfg.phi0);

  reader.read_double("bootstrap.eps", cfg.bootstrap_eps);
  reader.read_double("bootstrap.c", cfg.bootstrap_c);

  for (const auto& [key, value] : reader.pairs)
    if (!reader.consumed.count(key)) reader.fail("unknown key '" + key + "'");

  // Range validation mirrors the target modules so a bad value is caught
  // here instead of mid-sweep.
  if (cfg.grid_points <= 0)
    reader.fail("missing or invalid 'grid_points' (need a positive value)");
  if (!(cfg.box_length > 0.0))
    reader.fail("missing or invalid 'box_length' (need a positive value)");
  if (cfg.t_max < 0.0)
    reader.fail("missing or invalid 't_max' (need a value >= 0)");
  if (cfg.grid_points > 0 && cfg.box_length > 0.0) {
    try {
      Grid::make(cfg.dim, cfg.grid_points, cfg.box_length);
    } catch (const std::exception& e) {
      reader.fail(std::string("grid: ") + e.what());
    }
  }
  if (!(cfg.initial_width > 0.0))
    reader.fail("'initial_width' must be positive");
  if (!(cfg.dt > 0.0)) reader.fail("'dt' must be positive");
  if (cfg.snapshot_stride < 1) reader.fail("'snapshot_stride' must be >= 1");
  if (cfg.output_dir.empty()) reader.fail("'output_dir' must be non-empty");
  try {
    cfg.potential.validate();
  } catch (const std::exception& e) {
    reader.fail(std::string("potential: ") + e.what());
  }
  try {
    cfg.interaction.validate();
  } catch (const std::exception& e) {
    reader.fail(std::string("interaction: ") + e.what());
  }
  if (!std::isfinite(cfg.coupling.lambda))
    reader.fail("'coupling.lambda' must be finite");
  auto check_beta = [&reader](const std::string& key, double beta) {
    if (!(beta >= 0.0) || !(beta < 1.0 / 3.0))
      reader.fail("key '" + key + "': value out of range, need 0 <= beta < "
                  "1/3 (the convergence rate collapses at 1/3)");
  };
  check_beta("coupling.beta", cfg.coupling.beta);
  for (double b : cfg.sweep_beta) check_beta("sweep.beta", b);
  if (cfg.coupling.particle_number < 1)
    reader.fail("'coupling.particle_number' must be >= 1");
  for (int n : cfg.sweep_n)
    if (n < 1) reader.fail("'sweep.n' entries must be >= 1");
  if (!cfg.potential.center.empty() &&
      static_cast<int>(cfg.potential.center.size()) != cfg.dim)
    reader.fail("'potential.center' must list one coordinate per dimension");
  if (cfg.experiment == ExperimentKind::rollnik && cfg.dim != 3)
    reader.fail("rollnik admissibility is defined for dim = 3");
  if (cfg.experiment == ExperimentKind::bootstrap) {
    if (!(cfg.bootstrap_eps >= 0.0)) reader.fail("'bootstrap.eps' must be >= 0");
    if (!(cfg.bootstrap_c >= 0.0)) reader.fail("'bootstrap.c' must be >= 0");
  }
  if (cfg.experiment == ExperimentKind::groenwall_cert && !(cfg.phi0 >= 0.0))
    reader.fail("'groenwall.phi0' must be >= 0");

  if (!reader.errors.empty()) {
    std::string joined = "config errors:";
    for (const std::string& e : reader.errors) joined += "\n  - " + e;
    throw ConfigError(joined);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Canonical form and hash: semantic fields only, fixed order and number
// formatting, so whitespace, comments and key order never affect the digest.

namespace detail {

inline std::string double17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += double17(xs[i]);
  }
  return out;
}

inline std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace detail

inline std::string canonical_config_text(const ExperimentConfig& cfg) {
  std::string out;
  auto put = [&out](const std::string& key, const std::string& value) {
    out += key;
    out += "=";
    out += value;
    out += "\n";
  };
  put("experiment", experiment_name(cfg.experiment));
  put("dim", std::to_string(cfg.dim));
  put("grid_points", std::to_string(cfg.grid_points));
  put("box_length", detail::double17(cfg.box_length));
  put("initial_width", detail::double17(cfg.initial_width));
  put("t_max", detail::double17(cfg.t_max));
  put("dt", detail::double17(cfg.dt));
  put("snapshot_stride", std::to_string(cfg.snapshot_stride));
  // output_dir is deliberately absent: the hash identifies the experiment,
  // and the same run relocated on disk is still the same run.
  put("seed", std::to_string(cfg.seed));
  put("potential.family", detail::potential_family_name(cfg.potential.family));
  put("potential.amplitude", detail::double17(cfg.potential.amplitude));
  put("potential.width", detail::double17(cfg.potential.width));
  put("potential.center", detail::join_doubles(cfg.potential.center));
  put("interaction.family",
      detail::interaction_family_name(cfg.interaction.family));
  put("interaction.amplitude", detail::double17(cfg.interaction.amplitude));
  put("interaction.width", detail::double17(cfg.interaction.width));
  put("interaction.decay_exponent",
      detail::double17(cfg.interaction.decay_exponent));
  put("interaction.decay_constant",
      detail::double17(cfg.interaction.decay_constant));
  put("coupling.lambda", detail::double17(cfg.coupling.lambda));
  put("coupling.beta", detail::double17(cfg.coupling.beta));
  put("coupling.particle_number",
      std::to_string(cfg.coupling.particle_number));
  put("sweep.n", detail::join_ints(cfg.sweep_n));
  put("sweep.beta", detail::join_doubles(cfg.sweep_beta));
  put("groenwall.alpha_const", detail::double17(cfg.alpha_const));
  put("groenwall.alpha_power", detail::double17(cfg.alpha_power));
  put("groenwall.eps_const", detail::double17(cfg.eps_const));
  put("groenwall.eps_power", detail::double17(cfg.eps_power));
  put("groenwall.phi0", detail::double17(cfg.phi0));
  put("bootstrap.eps", detail::double17(cfg.bootstrap_eps));
  put("bootstrap.c", detail::double17(cfg.bootstrap_c));
  return out;
}

/// 64-bit FNV-1a over the canonical text, as a 16-digit hex string.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = canonical_config_text(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Result persistence

struct ResultRecord {
  std::string config_hash;
  std::string experiment;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> csv_paths;
  std::string summary_path;
  std::string software_version = kSoftwareVersion;
  nlohmann::json summary;  // in-memory payload, mirrored in summary_path
};

namespace detail {

inline std::string iso_utc_now() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

/// Write-temp-then-rename so concurrent cells and interrupted runs never
/// leave a half-written artifact under the final name.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open " + tmp.string() + " for write");
    out << content;
    if (!out.flush())
      throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct CsvWriter {
  std::string body;
  explicit CsvWriter(const std::string& header) { body = header + "\n"; }
  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) body += ",";
      body += double17(values[i]);
    }
    body += "\n";
  }
};

inline ComplexField initial_gaussian(const Grid& g, double a) {
  ComplexField u = make_field(g);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double r2 = 0.0;
    for (int axis = 0; axis < g.dim(); ++axis) {
      const double x = g.coordinate(g.unravel(j, axis));
      r2 += x * x;
    }
    u.values[j] = std::exp(-kPi * a * r2);
  }
  const double l2 = norm(u, Norm::L2);
  for (auto& z : u.values) z /= l2;
  return u;
}

/// Snapshot schedule 0, s dt, 2 s dt, ..., t_max (always including the
/// final step so comparisons cover the whole window).
inline std::vector<double> snapshot_schedule(double t_max, double dt,
                                             int stride) {
  const long long steps = std::llround(t_max / dt);
  std::vector<double> times;
  for (long long k = 0; k * stride <= steps; ++k)
    times.push_back(static_cast<double>(k * stride) * dt);
  if (steps % stride != 0) times.push_back(static_cast<double>(steps) * dt);
  return times;
}

/// Runs cells on `workers` threads in the given order; the first exception
/// wins and is rethrown after all threads drain.
inline void run_parallel(std::vector<std::function<void()>>& cells,
                         int workers) {
  if (workers <= 1 || cells.size() <= 1) {
    for (auto& cell : cells) cell();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto drain = [&]() {
    for (;;) {
      const std::size_t index = next.fetch_add(1);
      if (index >= cells.size()) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      try {
        cells[index]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min<int>(workers, static_cast<int>(cells.size()));
  for (int w = 0; w < count; ++w) pool.emplace_back(drain);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::string beta_tag(double beta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", beta);
  return buf;
}

/// The one-body limit equation: Hartree with the unscaled kernel at
/// beta = 0, cubic with coupling a = integral of w for beta > 0.
inline Nonlinearity limit_nonlinearity(const ComplexField& kernel,
                                       double beta) {
  if (beta == 0.0) return HartreeTerm{kernel};
  return CubicTerm{kernel_integral(kernel)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment pipelines

namespace detail {

inline void add_csv(ResultRecord& record, const std::filesystem::path& dir,
                    const std::string& name, const CsvWriter& csv) {
  const std::filesystem::path path = dir / name;
  write_file_atomic(path, csv.body);
  record.csv_paths.push_back(path.string());
}

inline void run_dispersive(const ExperimentConfig& cfg, ResultRecord& record,
                           const std::filesystem::path& dir) {
  Grid g = Grid::make(cfg.dim, cfg.grid_points, cfg.box_length);
  ComplexField u0 = initial_gaussian(g, cfg.initial_width);
  ComplexField v = sample_potential(cfg.potential, g);
  OneBodyProblem problem{g, u0, v, CubicTerm{1.0}, cfg.coupling.lambda};
  const std::vector<double> snaps =
      snapshot_schedule(cfg.t_max, cfg.dt, cfg.snapshot_stride);
  WaveTrajectory traj = evolve(problem, cfg.t_max, cfg.dt, snaps);

  CsvWriter obs("t,l2,linf,energy,boundary_mass");
  const std::size_t steps = traj.observables.size();
  for (std::size_t k = 0; k < steps; k += cfg.snapshot_stride) {
    const StepObservables& o = traj.observables[k];
    obs.row({o.t, o.l2, o.linf, o.energy, o.boundary_mass});
  }
  if ((steps - 1) % cfg.snapshot_stride != 0) {
    const StepObservables& o = traj.observables.back();
    obs.row({o.t, o.l2, o.linf, o.energy, o.boundary_mass});
  }
  add_csv(record, dir, "observables.csv", obs);

  DecaySeries decay = measure_decay(traj, 0.5 * cfg.dim);
  CsvWriter decay_csv("t,weighted_sup");
  nlohmann::json t_list = nlohmann::json::array();
  nlohmann::json w_list = nlohmann::json::array();
  std::vector<std::pair<double, double>> series;
  for (std::size_t k = 0; k < decay.times.size(); k += cfg.snapshot_stride) {
    decay_csv.row({decay.times[k], decay.values[k]});
    t_list.push_back(decay.times[k]);
    w_list.push_back(decay.values[k]);
  }
  add_csv(record, dir, "decay.csv", decay_csv);
  for (std::size_t k = 0; k < decay.times.size(); ++k)
    series.push_back({decay.times[k], decay.values[k]});
  UniformityReport uniformity = uniformity_check(series, 0.25);

  record.summary["decay_exponent"] = 0.5 * cfg.dim;
  record.summary["weighted_sup"] = decay.running_sup;
  record.summary["sup_early"] = uniformity.sup_early;
  record.summary["sup_late"] = uniformity.sup_late;
  record.summary["uniform"] = uniformity.uniform;
  record.summary["decay"] = {{"t", t_list}, {"weighted_sup", w_list}};
}

inline void run_linear_decay(const ExperimentConfig& cfg,
                             ResultRecord& record,
                             const std::filesystem::path& dir) {
  Grid g = Grid::make(cfg.dim, cfg.grid_points, cfg.box_length);
  ComplexField f = initial_gaussian(g, cfg.initial_width);
  ComplexField v = sample_potential(cfg.potential, g);
  std::vector<double> times =
      snapshot_schedule(cfg.t_max, cfg.dt, cfg.snapshot_stride);
  times.erase(times.begin());  // the t^{d/2} ratio is undefined at t = 0
  if (times.empty())
    throw ConfigError("linear-decay: need t_max >= snapshot_stride * dt");
  LinearDecayProbe probe = linear_decay_probe(v, f, times, cfg.dt);

  CsvWriter csv("t,ratio");
  for (std::size_t k = 0; k < probe.times.size(); ++k)
    csv.row({probe.times[k], probe.ratios[k]});
  add_csv(record, dir, "ratio.csv", csv);
  record.summary["empirical_constant"] = probe.empirical_constant;
  record.summary["free_constant"] =
      std::pow(4.0 * kPi, -0.5 * cfg.dim);
}

inline void run_rollnik(const ExperimentConfig& cfg, ResultRecord& record,
                        const std::filesystem::path& dir) {
  (void)dir;
  Grid g = Grid::make(cfg.dim, cfg.grid_points, cfg.box_length);
  ComplexField v = sample_potential(cfg.potential, g);
  RollnikReport report = check_rollnik(v);
  record.summary["rollnik_integral"] = report.rollnik_integral;
  record.summary["kato_sup"] = report.kato_sup;
  record.summary["admissible"] = report.admissible;
  record.summary["rollnik_threshold"] = kRollnikThreshold;
  record.summary["kato_threshold"] = kKatoThreshold;
}

inline void run_rate_sweep(const ExperimentConfig& cfg, ResultRecord& record,
                           const std::filesystem::path& dir, int workers) {
  Grid g = Grid::make(cfg.dim, cfg.grid_points, cfg.box_length);
  ComplexField u0 = initial_gaussian(g, cfg.initial_width);
  ComplexField v = sample_potential(cfg.potential, g);
  ComplexField w = sample_interaction(cfg.interaction, g);
  const std::vector<double> snaps =
      snapshot_schedule(cfg.t_max, cfg.dt, cfg.snapshot_stride);

  std::vector<double> betas =
      cfg.sweep_beta.empty() ? std::vector<double>{cfg.coupling.beta}
                             : cfg.sweep_beta;
  std::vector<int> ns = cfg.sweep_n.empty()
                            ? std::vector<int>{16, 64, 256, 1024, 4096}
                            : cfg.sweep_n;
  std::sort(ns.begin(), ns.end(), std::greater<int>());

  nlohmann::json fits = nlohmann::json::object();
  nlohmann::json plot = nlohmann::json::object();
  for (double beta : betas) {
    OneBodyProblem limit_problem{g, u0, v, limit_nonlinearity(w, beta),
                                 cfg.coupling.lambda};
    WaveTrajectory phi_traj = evolve(limit_problem, cfg.t_max, cfg.dt, snaps);

    std::vector<double> sup_errors(ns.size(), 0.0);
    std::vector<std::function<void()>> cells;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      cells.push_back([&, i]() {
        const int n_particles = ns[i];
        ComplexField wn = scaled_interaction(cfg.interaction, n_particles,
                                             beta, g);
        OneBodyProblem scaled{g, u0, v,
                              ScaledHartreeTerm{wn, n_particles, beta},
                              cfg.coupling.lambda};
        WaveTrajectory u_traj = evolve(scaled, cfg.t_max, cfg.dt, snaps);
        sup_errors[i] = compare_one_body(u_traj, phi_traj, snaps).sup;
      });
    }
    run_parallel(cells, workers);

    std::vector<std::pair<double, double>> samples;
    for (std::size_t i = ns.size(); i-- > 0;)  // ascending N in artifacts
      samples.push_back({static_cast<double>(ns[i]), sup_errors[i]});
    RateFit fit = fit_rate(samples);

    const std::string tag = beta_tag(beta);
    CsvWriter csv("n,sup_l2_difference");
    for (const auto& [n_val, err] : samples) csv.row({n_val, err});
    add_csv(record, dir, "rate-beta" + tag + ".csv", csv);

    nlohmann::json samples_json = nlohmann::json::array();
    for (const auto& [n_val, err] : samples)
      samples_json.push_back({n_val, err});
    nlohmann::json fit_json = {
        {"beta", beta},
        {"predicted_exponent", -theorem_rate(beta)},
        {"fitted_exponent", fit.exponent},
        {"residual_rms", fit.residual_rms},
        {"samples", samples_json},
    };
    write_file_atomic(dir / ("rate-beta" + tag + ".json"),
                      fit_json.dump(2) + "\n");
    fits[tag] = fit_json;

    nlohmann::json log_n = nlohmann::json::array();
    nlohmann::json log_err = nlohmann::json::array();
    nlohmann::json fitted = nlohmann::json::array();
    for (const auto& [n_val, err] : samples) {
      log_n.push_back(std::log10(n_val));
      log_err.push_back(std::log10(err));
      fitted.push_back((fit.intercept + fit.exponent * std::log(n_val)) /
                       std::log(10.0));
    }
    plot[tag] = {{"log10_n", log_n},
                 {"log10_error", log_err},
                 {"fitted_line", fitted}};
  }
  record.summary["fits"] = fits;
  record.summary["rate"] = plot;
}

inline void run_manybody_trace(const ExperimentConfig& cfg,
                               ResultRecord& record,
                               const std::filesystem::path& dir,
                               int workers) {
  Grid g = Grid::make(cfg.dim, cfg.grid_points, cfg.box_length);
  ComplexField u0 = initial_gaussian(g, cfg.initial_width);
  ComplexField v = sample_potential(cfg.potential, g);
  ComplexField w = sample_interaction(cfg.interaction, g);
  const double beta = cfg.coupling.beta;
  const std::vector<double> snaps =
      snapshot_schedule(cfg.t_max, cfg.dt, cfg.snapshot_stride);

  std::vector<int> ns = cfg.sweep_n;
  if (ns.empty())
    ns = cfg.coupling.particle_number > 1
             ? std::vector<int>{cfg.coupling.particle_number}
             : std::vector<int>{2, 3, 4};
  std::sort(ns.begin(), ns.end(), std::greater<int>());

  OneBodyProblem limit_problem{g, u0, v, limit_nonlinearity(w, beta),
                               cfg.coupling.lambda};
  WaveTrajectory phi_traj = evolve(limit_problem, cfg.t_max, cfg.dt, snaps);

  struct NResult {
    std::vector<double> trace;
    std::vector<double> fraction;
    std::vector<double> mass;
    std::vector<double> energy;
    double sup_trace = 0.0;
    double sup_early = 0.0;
    double sup_late = 0.0;
    bool uniform = false;
    double max_symmetry_defect = 0.0;
  };
  std::vector<NResult> results(ns.size());
  std::vector<std::function<void()>> cells;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    cells.push_back([&, i]() {
      const int n_particles = ns[i];
      ComplexField wn =
          scaled_interaction(cfg.interaction, n_particles, beta, g);
      ManyBodyState psi0 = product_state(u0, n_particles);
      ManyBodyTrajectory traj = evolve_manybody(
          psi0, v, wn, cfg.coupling.lambda, cfg.t_max, cfg.dt, snaps);
      NResult& r = results[i];
      std::vector<std::pair<double, double>> series;
      for (std::size_t s = 0; s < traj.snapshot_times.size(); ++s) {
        const double td = trace_distance(traj.reduced_densities[s],
                                         phi_traj.snapshots[s]);
        r.trace.push_back(td);
        r.fraction.push_back(condensate_fraction(traj.reduced_densities[s]));
        r.mass.push_back(traj.observables[s].l2);
        r.energy.push_back(traj.observables[s].energy);
        r.sup_trace = std::max(r.sup_trace, td);
        r.max_symmetry_defect = std::max(r.max_symmetry_defect,
                                         traj.observables[s].symmetry_defect);
        series.push_back({traj.snapshot_times[s], td});
      }
      UniformityReport u = uniformity_check(series, 0.5);
      r.sup_early = u.sup_early;
      r.sup_late = u.sup_late;
      r.uniform = u.uniform;
    });
  }
  run_parallel(cells, workers);

  nlohmann::json per_n = nlohmann::json::object();
  nlohmann::json plot = nlohmann::json::object();
  std::vector<std::pair<double, double>> fit_samples;
  for (std::size_t i = ns.size(); i-- > 0;) {  // ascending N in artifacts
    const NResult& r = results[i];
    CsvWriter csv("t,trace_distance,condensate_fraction,mass,energy");
    nlohmann::json t_list = nlohmann::json::array();
    nlohmann::json d_list = nlohmann::json::array();
    for (std::size_t s = 0; s < r.trace.size(); ++s) {
      csv.row({snaps[s], r.trace[s], r.fraction[s], r.mass[s], r.energy[s]});
      t_list.push_back(snaps[s]);
      d_list.push_back(r.trace[s]);
    }
    const std::string tag = std::to_string(ns[i]);
    add_csv(record, dir, "trace-N" + tag + ".csv", csv);
    per_n[tag] = {{"sup_trace_distance", r.sup_trace},
                  {"sup_early", r.sup_early},
                  {"sup_late", r.sup_late},
                  {"uniform", r.uniform},
                  {"max_symmetry_defect", r.max_symmetry_defect}};
    plot[tag] = {{"t", t_list}, {"trace_distance", d_list}};
    if (r.sup_trace > 0.0)
      fit_samples.push_back({static_cast<double>(ns[i]), r.sup_trace});
  }
  record.summary["per_n"] = per_n;
  record.summary["trace"] = plot;
  record.summary["predicted_exponent"] = -theorem_rate(beta);

  std::set<double> distinct;
  for (const auto& [n_val, err] : fit_samples) distinct.insert(n_val);
  if (distinct.size() >= 3) {
    RateFit fit = fit_rate(fit_samples);
    record.summary["fitted_exponent"] = fit.exponent;
    record.summary["residual_rms"] = fit.residual_rms;
  }
}

inline void run_groenwall_cert(const ExperimentConfig& cfg,
                               ResultRecord& record,
                               const std::filesystem::path& dir) {
  const long long steps = std::llround(cfg.t_max / cfg.dt);
  if (steps < 1)
    throw ConfigError("groenwall-cert: need t_max >= dt for the node grid");
  std::vector<double> nodes;
  for (long long k = 0; k <= steps; ++k)
    nodes.push_back(static_cast<double>(k) * cfg.dt);
  auto alpha = [&cfg](double t) {
    return cfg.alpha_const * std::pow(1.0 + t, -cfg.alpha_power);
  };
  auto eps = [&cfg](double t) {
    return cfg.eps_const * std::pow(1.0 + t, -cfg.eps_power);
  };
  GroenwallCertificate cert = groenwall_bound(alpha, eps, cfg.phi0, nodes);

  CsvWriter csv("t,alpha,eps,bound");
  double sup_bound = 0.0;
  for (std::size_t k = 0; k < nodes.size(); k += cfg.snapshot_stride) {
    csv.row({cert.time_nodes[k], cert.alpha_values[k], cert.eps_values[k],
             cert.bound_values[k]});
    sup_bound = std::max(sup_bound, cert.bound_values[k]);
  }
  sup_bound = std::max(sup_bound, cert.bound_values.back());
  add_csv(record, dir, "certificate.csv", csv);
  record.summary["phi0"] = cfg.phi0;
  record.summary["final_bound"] = cert.bound_values.back();
  record.summary["sup_bound"] = sup_bound;
}

inline void run_bootstrap(const ExperimentConfig& cfg, ResultRecord& record,
                          const std::filesystem::path& dir) {
  (void)dir;
  record.summary["eps"] = cfg.bootstrap_eps;
  record.summary["c"] = cfg.bootstrap_c;
  record.summary["discriminant"] =
      27.0 * cfg.bootstrap_c * cfg.bootstrap_eps * cfg.bootstrap_eps;
  std::optional<double> root = bootstrap_root(cfg.bootstrap_eps,
                                              cfg.bootstrap_c);
  if (root) {
    record.summary["root"] = *root;
    record.summary["closed"] = true;
  } else {
    record.summary["closed"] = false;
    record.summary["reason"] = "27 C eps^2 >= 4: no invariant region";
  }
}

}  // namespace detail

/// Runs the configured experiment and persists all artifacts under
/// output_dir. On a module failure, whatever cells completed stay on disk
/// next to a FAILED.json marker, and the error propagates to the caller.
inline ResultRecord run_experiment(const ExperimentConfig& cfg,
                                   int workers = 1) {
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  ResultRecord record;
  record.config_hash = config_hash(cfg);
  record.experiment = experiment_name(cfg.experiment);
  record.started_at = detail::iso_utc_now();
  record.summary["experiment"] = record.experiment;
  record.summary["config_hash"] = record.config_hash;

  try {
    switch (cfg.experiment) {
      case ExperimentKind::dispersive:
        detail::run_dispersive(cfg, record, dir);
        break;
      case ExperimentKind::linear_decay:
        detail::run_linear_decay(cfg, record, dir);
        break;
      case ExperimentKind::rollnik:
        detail::run_rollnik(cfg, record, dir);
        break;
      case ExperimentKind::rate_sweep:
        detail::run_rate_sweep(cfg, record, dir, workers);
        break;
      case ExperimentKind::manybody_trace:
        detail::run_manybody_trace(cfg, record, dir, workers);
        break;
      case ExperimentKind::groenwall_cert:
        detail::run_groenwall_cert(cfg, record, dir);
        break;
      case ExperimentKind::bootstrap:
        detail::run_bootstrap(cfg, record, dir);
        break;
    }
  } catch (const std::exception& e) {
    nlohmann::json marker = {{"experiment", record.experiment},
                             {"config_hash", record.config_hash},
                             {"error", e.what()},
                             {"failed_at", detail::iso_utc_now()}};
    detail::write_file_atomic(dir / "FAILED.json", marker.dump(2) + "\n");
    throw;
  }

  const std::filesystem::path summary_path = dir / "summary.json";
  detail::write_file_atomic(summary_path, record.summary.dump(2) + "\n");
  record.summary_path = summary_path.string();
  record.finished_at = detail::iso_utc_now();

  nlohmann::json record_json = {
      {"config_hash", record.config_hash},
      {"experiment", record.experiment},
      {"started_at", record.started_at},
      {"finished_at", record.finished_at},
      {"csv_paths", record.csv_paths},
      {"summary_path", record.summary_path},
      {"software_version", record.software_version},
  };
  detail::write_file_atomic(dir / "record.json", record_json.dump(2) + "\n");
  return record;
}

// ---------------------------------------------------------------------------
// Plot data emission

enum class PlotKind { decay, rate, trace };

/// Writes a plain-text series (columns documented in the '#' header line)
/// next to the record's other artifacts and returns its path.
inline std::string emit_plotdata(const ResultRecord& record, PlotKind kind) {
  const std::filesystem::path dir =
      std::filesystem::path(record.summary_path).parent_path();
  std::string body;
  std::string name;
  switch (kind) {
    case PlotKind::decay: {
      if (!record.summary.contains("decay"))
        throw ConfigError("emit_plotdata: record has no decay payload");
      const auto& block = record.summary["decay"];
      body = "# t  weighted_sup\n";
      const auto& ts = block["t"];
      const auto& ws = block["weighted_sup"];
      for (std::size_t k = 0; k < ts.size(); ++k)
        body += detail::double17(ts[k].get<double>()) + "  " +
                detail::double17(ws[k].get<double>()) + "\n";
      name = "plot-decay.txt";
      break;
    }
    case PlotKind::rate: {
      if (!record.summary.contains("rate"))
        throw ConfigError("emit_plotdata: record has no rate payload");
      for (const auto& [tag, block] : record.summary["rate"].items()) {
        body += "# beta = " + tag + "\n";
        body += "# log10_N  log10_error  fitted_line\n";
        const auto& ln = block["log10_n"];
        const auto& le = block["log10_error"];
        const auto& fl = block["fitted_line"];
        for (std::size_t k = 0; k < ln.size(); ++k)
          body += detail::double17(ln[k].get<double>()) + "  " +
                  detail::double17(le[k].get<double>()) + "  " +
                  detail::double17(fl[k].get<double>()) + "\n";
        body += "\n";
      }
      name = "plot-rate.txt";
      break;
    }
    case PlotKind::trace: {
      if (!record.summary.contains("trace"))
        throw ConfigError("emit_plotdata: record has no trace payload");
      for (const auto& [tag, block] : record.summary["trace"].items()) {
        body += "# N = " + tag + "\n";
        body += "# t  trace_distance\n";
        const auto& ts = block["t"];
        const auto& ds = block["trace_distance"];
        for (std::size_t k = 0; k < ts.size(); ++k)
          body += detail::double17(ts[k].get<double>()) + "  " +
                  detail::double17(ds[k].get<double>()) + "\n";
        body += "\n";
      }
      name = "plot-trace.txt";
      break;
    }
  }
  const std::filesystem::path path = dir / name;
  detail::write_file_atomic(path, body);
  return path.string();
}

}  // namespace meanfield

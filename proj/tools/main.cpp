#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "meanfield/errors.hpp"
#include "meanfield/experiment.hpp"

namespace {

constexpr const char* kUsage =
    "usage: meanfield <experiment> --config <path> [--out <dir>]\n"
    "                 [--workers <n>] [--seed <int>]\n"
    "\n"
    "experiments:\n"
    "  dispersive      weighted sup-norm decay of a one-body evolution\n"
    "  linear-decay    empirical constant of the free/linear decay bound\n"
    "  rollnik         admissibility integrals of the external potential\n"
    "  rate-sweep      one-body convergence rate over particle numbers\n"
    "  manybody-trace  exact N-body marginals against the limit equation\n"
    "  groenwall-cert  integral-inequality certificate on a time grid\n"
    "  bootstrap       smallest root of the closed-loop inequality\n"
    "\n"
    "exit codes: 0 ok, 2 config error, 3 numerical blow-up, 4 budget\n";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw meanfield::ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
  try {
    if (argc < 2) {
      std::fputs(kUsage, stderr);
      return 2;
    }
    const std::string subcommand = argv[1];
    if (subcommand == "--help" || subcommand == "-h") {
      std::fputs(kUsage, stdout);
      return 0;
    }
    meanfield::ExperimentKind kind;
    if (!meanfield::experiment_from_name(subcommand, kind))
      throw meanfield::ConfigError("unknown experiment '" + subcommand +
                                   "'; see --help");

    std::string config_path;
    std::string out_dir;
    bool has_seed = false;
    long long seed = 0;
    int workers = 1;
    for (int i = 2; i < argc; ++i) {
      const std::string flag = argv[i];
      auto next = [&](const char* what) -> std::string {
        if (i + 1 >= argc)
          throw meanfield::ConfigError(std::string("flag ") + flag +
                                       " needs a " + what);
        return argv[++i];
      };
      if (flag == "--config") {
        config_path = next("path");
      } else if (flag == "--out") {
        out_dir = next("directory");
      } else if (flag == "--workers") {
        workers = std::atoi(next("count").c_str());
        if (workers < 1)
          throw meanfield::ConfigError("--workers needs a positive count");
      } else if (flag == "--seed") {
        seed = std::atoll(next("integer").c_str());
        has_seed = true;
      } else {
        throw meanfield::ConfigError("unknown flag '" + flag + "'");
      }
    }
    if (config_path.empty())
      throw meanfield::ConfigError("--config <path> is required");

    meanfield::ExperimentConfig cfg =
        meanfield::parse_config(read_file(config_path));
    if (cfg.experiment != kind)
      throw meanfield::ConfigError(
          std::string("config declares experiment '") +
          meanfield::experiment_name(cfg.experiment) +
          "' but the subcommand is '" + subcommand + "'");
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (has_seed) cfg.seed = seed;

    meanfield::ResultRecord record = meanfield::run_experiment(cfg, workers);
    if (record.summary.contains("decay"))
      meanfield::emit_plotdata(record, meanfield::PlotKind::decay);
    if (record.summary.contains("rate"))
      meanfield::emit_plotdata(record, meanfield::PlotKind::rate);
    if (record.summary.contains("trace"))
      meanfield::emit_plotdata(record, meanfield::PlotKind::trace);

    std::printf("ok %s config=%s artifacts=%s\n", record.experiment.c_str(),
                record.config_hash.c_str(), cfg.output_dir.c_str());
    return 0;
  } catch (const meanfield::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const meanfield::BlowupError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const meanfield::BudgetError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}

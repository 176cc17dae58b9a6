#pragma once

#include "maskcls/glcc.hpp"
#include "maskcls/tensor_io.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace maskcls::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

inline constexpr int kRunConfigVersion = 1;
inline constexpr const char* kThreadsEnv = "MASKCLS_THREADS";

/// Fully resolved settings of one command; written as run_config.json next
/// to every output and accepted back through --config.
struct RunConfig {
  std::string command;
  std::string workdir = ".";
  std::optional<std::string> supervision;
  PropagationConfig propagation;
  ProbeHyper probe;
  int rounds = 2;
  std::optional<double> temperature;
  double probe_temperature = 1.0;
  double weak_filter_constant = 1e4;
  std::string mode = "auto";
  int threads = 0;
  std::string bundle;
  std::string graph;
  std::string model;
  std::string pred;
  std::string out;
  int selftest_grids = 100;
  int selftest_bias_rows = 1000;
  Index oracle_max_size = kExactOracleMaxSize;

  std::filesystem::path resolve(const std::string& path) const;
  BootstrapConfig bootstrap_config() const;
  Json to_json() const;
  /// Overlays the fields present in `j` onto `base`. Throws ValidationError on
  /// a missing or unsupported version.
  static RunConfig from_json(const Json& j, RunConfig base);
  static RunConfig from_json(const Json& j);
};

/// Parses argv and runs one subcommand; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace maskcls::cli

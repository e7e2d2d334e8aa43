#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splatspa/trainer.hpp"

namespace splatspa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitInvalid = 2;

/// Flat key/value run configuration. Keys match the long CLI flags.
struct RunConfig {
  std::string target;
  std::string out = "out";
  std::size_t n = 500;
  std::size_t kappa = 0;
  double delta = 1e-2;
  std::optional<double> epsilon;  // default 1e-4 * kappa
  std::size_t max_outer = 0;      // 0: largest T that fits the sparsifying phase
  std::size_t interval = 50;
  std::size_t sparsify_start = 3000;
  std::size_t prune_iter = 6000;
  std::size_t iters = 8000;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;
  double rho = 0.2;
  double lr_position = 2e-3;
  double lr_rotation = 5e-3;
  double lr_scale = 5e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;
  std::string projection = "magnitude";
  std::string criterion = "opacity";
  double keep_fraction = 0.25;
  std::optional<std::string> resume;
  std::optional<std::size_t> stop_at;

  TrainerConfig trainer_config(TrainMode mode) const;
  /// Throws InputError naming the offending fields.
  void validate(TrainMode mode) const;
};

/// Parses `key = value` lines ('#' comments, optional double quotes).
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Runs one CLI invocation; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Fixed 6-decimal formatting used in every CSV file.
std::string fmt6(double v);

}  // namespace splatspa::cli

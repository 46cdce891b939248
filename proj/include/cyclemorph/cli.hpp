#pragma once

#include <optional>
#include <string>

namespace cm::cli {

// Command implementations behind the cyclemorph binary. They throw
// ConfigError for user/config mistakes (exit 1) and IoError/NumericError for
// runtime or data failures (exit 2); the binary maps exceptions to exit codes.

struct SynthArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};
void run_synth(const SynthArgs& args);

struct TrainArgs {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string resume_path;  // empty = fresh run
  bool multiscale = false;
  bool sum_normalization = false;
  std::optional<std::uint64_t> seed;
};
void run_train(const TrainArgs& args);

struct RegisterArgs {
  std::string checkpoint_dir;  // holds global.cmk [local.cmk] config.json
  std::string moving_path;     // .dtf or .pgm
  std::string fixed_path;
  std::string out_dir;
  bool multiscale = false;
  bool plain_sum_fusion = false;
};
void run_register(const RegisterArgs& args);

struct EvalArgs {
  std::string pred_dir;   // register output (deformed.dtf, phi_final.dtf)
  std::string truth_dir;  // benchmark pair directory
  std::string out_path;   // report JSON
  std::string checkpoint_dir;  // optional; enables the reverse-consistency metrics
  bool plots = false;
};
void run_eval(const EvalArgs& args);

}  // namespace cm::cli

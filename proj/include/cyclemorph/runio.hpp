#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "cyclemorph/image.hpp"
#include "cyclemorph/multiscale.hpp"
#include "cyclemorph/synthbench.hpp"
#include "cyclemorph/trainer.hpp"

namespace cm::runio {

inline constexpr const char* kToolVersion = "cyclemorph 0.1.0";

std::string fnv1a64_hex(const void* data, size_t size);
std::string fnv1a64_file_hex(const std::string& path);

// write-then-rename so readers never observe a partial file
void write_text_atomic(const std::string& path, const std::string& text);

nlohmann::json to_json(const synthbench::SynthConfig& cfg);
synthbench::SynthConfig synth_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const trainer::TrainConfig& cfg);
trainer::TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const multiscale::MultiscaleConfig& cfg);
multiscale::MultiscaleConfig multiscale_config_from_json(const nlohmann::json& j);

nlohmann::json load_json_file(const std::string& path);

// Reproducibility record written at the end of every CLI run.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_checksums;
  std::map<std::string, std::string> artifact_checksums;
  double wall_seconds = 0.0;

  void write(const std::string& path) const;
};

// best-effort plot emission (excluded from determinism guarantees)
void write_png_gray(const std::string& path, const Tensor& plane);  // [H,W] in [0,1]
void write_quiver_svg(const std::string& path, const DisplacementField& phi, int grid_step = 4);

}  // namespace cm::runio

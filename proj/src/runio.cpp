#include "cyclemorph/runio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace cm::runio {

std::string fnv1a64_hex(const void* data, size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fnv1a64_file_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checksum: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return fnv1a64_hex(bytes.data(), bytes.size());
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + tmp);
    f << text;
    if (!f) throw IoError("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

nlohmann::json to_json(const synthbench::SynthConfig& cfg) {
  nlohmann::json j;
  j["lattice"] = cfg.lattice;
  j["num_pairs"] = cfg.num_pairs;
  j["amplitude"] = cfg.amplitude;
  j["sigma"] = cfg.sigma;
  j["num_shapes"] = cfg.num_shapes;
  j["num_landmarks"] = cfg.num_landmarks;
  j["seed"] = cfg.seed;
  j["intensity_remap"] = cfg.intensity_remap;
  j["max_retries"] = cfg.max_retries;
  return j;
}

namespace {

[[noreturn]] void bad_field(const std::string& name, const std::exception& e) {
  throw ConfigError("config: invalid field '" + name + "': " + e.what());
}

template <typename T>
void get_to(const nlohmann::json& j, const char* name, T& out, bool required = false) {
  if (!j.contains(name)) {
    if (required) throw ConfigError(std::string("config: missing field '") + name + "'");
    return;
  }
  try {
    j.at(name).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    bad_field(name, e);
  }
}

}  // namespace

synthbench::SynthConfig synth_config_from_json(const nlohmann::json& j) {
  synthbench::SynthConfig cfg;
  get_to(j, "lattice", cfg.lattice, true);
  get_to(j, "num_pairs", cfg.num_pairs, true);
  get_to(j, "amplitude", cfg.amplitude);
  get_to(j, "sigma", cfg.sigma);
  get_to(j, "num_shapes", cfg.num_shapes);
  get_to(j, "num_landmarks", cfg.num_landmarks);
  get_to(j, "seed", cfg.seed);
  get_to(j, "intensity_remap", cfg.intensity_remap);
  get_to(j, "max_retries", cfg.max_retries);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const trainer::TrainConfig& cfg) {
  nlohmann::json j;
  j["alpha"] = cfg.hp.alpha;
  j["beta"] = cfg.hp.beta;
  j["lambda"] = cfg.hp.lambda;
  j["ncc_window"] = cfg.hp.ncc_window;
  j["eps"] = cfg.hp.eps;
  j["normalization"] =
      cfg.hp.normalization == losses::Normalization::kMean ? "mean" : "sum";
  j["identity_same_net"] = cfg.hp.identity_same_net;
  j["spatial_rank"] = cfg.net.spatial_rank;
  j["encoder_widths"] = cfg.net.enc_widths;
  j["decoder_widths"] = cfg.net.dec_widths;
  j["kernel"] = cfg.net.kernel;
  j["leaky_slope"] = cfg.net.leaky_slope;
  j["final_init_std"] = cfg.net.final_init_std;
  j["learning_rate"] = cfg.learning_rate;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["augment_flips"] = cfg.augment_flips;
  j["augment_rot90"] = cfg.augment_rot90;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["alternate_updates"] = cfg.alternate_updates;
  return j;
}

trainer::TrainConfig train_config_from_json(const nlohmann::json& j) {
  trainer::TrainConfig cfg;
  get_to(j, "alpha", cfg.hp.alpha);
  get_to(j, "beta", cfg.hp.beta);
  get_to(j, "lambda", cfg.hp.lambda);
  get_to(j, "ncc_window", cfg.hp.ncc_window);
  get_to(j, "eps", cfg.hp.eps);
  if (j.contains("normalization")) {
    const std::string mode = j.at("normalization").get<std::string>();
    if (mode == "mean")
      cfg.hp.normalization = losses::Normalization::kMean;
    else if (mode == "sum")
      cfg.hp.normalization = losses::Normalization::kSum;
    else
      throw ConfigError("config: normalization must be \"mean\" or \"sum\"");
  }
  get_to(j, "identity_same_net", cfg.hp.identity_same_net);
  get_to(j, "spatial_rank", cfg.net.spatial_rank);
  get_to(j, "encoder_widths", cfg.net.enc_widths);
  get_to(j, "decoder_widths", cfg.net.dec_widths);
  get_to(j, "kernel", cfg.net.kernel);
  get_to(j, "leaky_slope", cfg.net.leaky_slope);
  get_to(j, "final_init_std", cfg.net.final_init_std);
  get_to(j, "learning_rate", cfg.learning_rate);
  get_to(j, "epochs", cfg.epochs);
  get_to(j, "batch_size", cfg.batch_size);
  get_to(j, "seed", cfg.seed);
  get_to(j, "beta1", cfg.beta1);
  get_to(j, "beta2", cfg.beta2);
  get_to(j, "adam_eps", cfg.adam_eps);
  get_to(j, "augment_flips", cfg.augment_flips);
  get_to(j, "augment_rot90", cfg.augment_rot90);
  get_to(j, "checkpoint_every", cfg.checkpoint_every);
  get_to(j, "alternate_updates", cfg.alternate_updates);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const multiscale::MultiscaleConfig& cfg) {
  nlohmann::json j;
  j["global_factors"] = cfg.global_factors;
  j["patch_edge"] = cfg.patch_edge;
  j["patch_strides"] = cfg.patch_strides;
  j["fusion"] = cfg.fusion == multiscale::MultiscaleConfig::Fusion::kUniform ? "uniform" : "cosine";
  j["plain_sum_fusion"] = cfg.compose_mode == warp::ComposeMode::kPlainSum;
  return j;
}

multiscale::MultiscaleConfig multiscale_config_from_json(const nlohmann::json& j) {
  multiscale::MultiscaleConfig cfg;
  get_to(j, "global_factors", cfg.global_factors);
  get_to(j, "patch_edge", cfg.patch_edge);
  get_to(j, "patch_strides", cfg.patch_strides);
  if (j.contains("fusion")) {
    const std::string f = j.at("fusion").get<std::string>();
    if (f == "uniform")
      cfg.fusion = multiscale::MultiscaleConfig::Fusion::kUniform;
    else if (f == "cosine")
      cfg.fusion = multiscale::MultiscaleConfig::Fusion::kCosine;
    else
      throw ConfigError("config: fusion must be \"uniform\" or \"cosine\"");
  }
  bool plain_sum = false;
  get_to(j, "plain_sum_fusion", plain_sum);
  cfg.compose_mode = plain_sum ? warp::ComposeMode::kPlainSum : warp::ComposeMode::kCompose;
  return cfg;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  j["seed"] = seed;
  j["input_checksums"] = input_checksums;
  j["artifact_checksums"] = artifact_checksums;
  j["wall_seconds"] = wall_seconds;
  j["tool_version"] = kToolVersion;
  write_text_atomic(path, j.dump(2));
}

namespace {

void png_chunk(std::string& out, const char type[4], const std::string& payload) {
  auto put_u32 = [&out](std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
  };
  put_u32(static_cast<std::uint32_t>(payload.size()));
  std::string body(type, 4);
  body += payload;
  out += body;
  const auto crc =
      crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  put_u32(static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png_gray(const std::string& path, const Tensor& plane) {
  if (plane.rank() != 2) throw ShapeError("png: expected a [H,W] tensor");
  const int h = plane.shape[0], w = plane.shape[1];
  std::string raw;
  raw.reserve(static_cast<size_t>(h) * (w + 1));
  for (int y = 0; y < h; ++y) {
    raw.push_back('\0');  // filter type none
    for (int x = 0; x < w; ++x) {
      const float v = std::clamp(plane.data[static_cast<size_t>(y) * w + x], 0.0f, 1.0f);
      raw.push_back(static_cast<char>(std::lround(v * 255.0f)));
    }
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(comp_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &comp_len,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                6) != Z_OK)
    throw IoError("png: compression failed");
  compressed.resize(comp_len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  auto put_u32 = [&ihdr](std::uint32_t v) {
    ihdr.push_back(static_cast<char>((v >> 24) & 0xff));
    ihdr.push_back(static_cast<char>((v >> 16) & 0xff));
    ihdr.push_back(static_cast<char>((v >> 8) & 0xff));
    ihdr.push_back(static_cast<char>(v & 0xff));
  };
  put_u32(static_cast<std::uint32_t>(w));
  put_u32(static_cast<std::uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(0);   // grayscale
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", compressed);
  png_chunk(out, "IEND", "");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("png: cannot open " + path);
  f << out;
}

void write_quiver_svg(const std::string& path, const DisplacementField& phi, int grid_step) {
  if (phi.dim() != 2) throw ShapeError("quiver: 2D fields only");
  const auto lattice = phi.lattice();
  const int h = lattice[0], w = lattice[1];
  const std::int64_t vox = phi.voxels();
  const int scale = 8;  // svg user units per voxel
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(w * scale) + "\" height=\"" + std::to_string(h * scale) +
                    "\" viewBox=\"0 0 " + std::to_string(w * scale) + " " +
                    std::to_string(h * scale) + "\">\n<rect width=\"100%\" height=\"100%\" "
                    "fill=\"white\"/>\n";
  char buf[192];
  for (int y = grid_step / 2; y < h; y += grid_step) {
    for (int x = grid_step / 2; x < w; x += grid_step) {
      const std::int64_t v = static_cast<std::int64_t>(y) * w + x;
      const double dy = phi.values[v];
      const double dx = phi.values[vox + v];
      const double x0 = (x + 0.5) * scale, y0 = (y + 0.5) * scale;
      const double x1 = x0 + dx * scale, y1 = y0 + dy * scale;
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                    "stroke=\"#1f4e79\" stroke-width=\"1\"/>\n<circle cx=\"%.1f\" cy=\"%.1f\" "
                    "r=\"1.2\" fill=\"#c44\"/>\n",
                    x0, y0, x1, y1, x1, y1);
      svg += buf;
    }
  }
  svg += "</svg>\n";
  write_text_atomic(path, svg);
}

}  // namespace cm::runio

#pragma once

#include <map>
#include <string>

#include "cyclemorph/ops.hpp"
#include "cyclemorph/rng.hpp"

namespace cm::regnet {

// Encoder-decoder field estimator: strided-conv encoder, nearest-upsample +
// conv decoder with skip concatenations, final convolution to one channel per
// spatial axis. Inputs are a (moving, fixed) pair concatenated channel-wise.
struct RegNetConfig {
  int spatial_rank = 2;
  std::vector<int> enc_widths = {16, 32, 32, 32};     // stride-2 conv per level
  std::vector<int> dec_widths = {32, 32, 32, 8, 8};   // one more conv than levels
  int kernel = 3;
  double leaky_slope = 0.2;
  double final_init_std = 1e-5;  // near-identity start

  int levels() const { return static_cast<int>(enc_widths.size()); }
  int divisibility() const { return 1 << levels(); }
  void validate() const;
};

using RegNetParams = std::map<std::string, Tensor>;

struct LayerSpec {
  std::string name;
  int in_ch = 0;
  int out_ch = 0;
  int stride = 1;
  bool activated = true;
};

// The layer graph implied by a config; single source of truth for parameter
// names and shapes.
std::vector<LayerSpec> layer_specs(const RegNetConfig& cfg);

RegNetParams init(const RegNetConfig& cfg, std::uint64_t seed);

// Throws listing missing/unexpected names or wrong shapes.
void validate_params(const RegNetConfig& cfg, const RegNetParams& params,
                     const std::string& prefix = "");

template <typename T>
using VarMap = std::map<std::string, VarT<T>>;

// Puts every parameter on the tape; requires_grad controls trainability.
template <typename T>
VarMap<T> params_to_vars(TapeT<T>& tape, const RegNetParams& params, bool requires_grad);

// moving/fixed are [1,spatial...] vars sharing the net's tape; returns the
// displacement field [rank,spatial...] on the input lattice.
template <typename T>
VarT<T> forward(const RegNetConfig& cfg, const VarMap<T>& p, VarT<T> moving, VarT<T> fixed,
                const std::string& prefix = "");

// Inference path: runs forward on a private tape without gradients.
Tensor forward_infer(const RegNetConfig& cfg, const RegNetParams& params, const Tensor& moving,
                     const Tensor& fixed, const std::string& prefix = "");

// Checkpoints: magic "CMK1", u32 entry count, then per entry u16 name length,
// UTF-8 name, embedded DTF tensor. Loads are bit-exact.
void save_named_tensors(const std::string& path, const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> load_named_tensors(const std::string& path);

void save(const RegNetParams& params, const std::string& path);
RegNetParams load(const std::string& path);

}  // namespace cm::regnet

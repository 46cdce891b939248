#pragma once

#include "cyclemorph/regnet.hpp"
#include "cyclemorph/trainer.hpp"
#include "cyclemorph/warp.hpp"

namespace cm::multiscale {

struct MultiscaleConfig {
  std::vector<int> global_factors = {2, 2};  // per-axis subsampling, 1 allowed
  int patch_edge = 64;
  // empty = default overlap scheme: stride p/4 per axis, p/8 on the last axis
  // of a 3D lattice
  std::vector<int> patch_strides = {};
  enum class Fusion { kUniform, kCosine } fusion = Fusion::kUniform;
  warp::ComposeMode compose_mode = warp::ComposeMode::kCompose;

  std::vector<int> strides_for(const std::vector<int>& lattice) const;
  void validate(int spatial_rank) const;
};

// Deterministic raster-order patch grid; the last patch along each axis is
// shifted inward so the union of patches covers the lattice exactly.
std::vector<std::vector<int>> patch_offsets(const std::vector<int>& lattice,
                                            const MultiscaleConfig& cfg);

Tensor extract_patch(const Tensor& t, const std::vector<int>& offset, int edge);

struct GlobalResult {
  DisplacementField phi_global;  // full-resolution field
  Image intermediate;            // moving image deformed by phi_global
};

// Coarse full-volume pass: forward on the block-averaged pair, then the field
// is rescaled (and its displacements scaled) back to full resolution.
GlobalResult global_stage(const regnet::RegNetConfig& cfg, const regnet::RegNetParams& params,
                          const Image& moving, const Image& fixed, const MultiscaleConfig& ms);

// Patch-wise refinement: per-patch forward on (intermediate, fixed) crops,
// fused into one full-lattice field with the configured weighting.
DisplacementField local_stage(const regnet::RegNetConfig& cfg,
                              const regnet::RegNetParams& params, const Image& intermediate,
                              const Image& fixed, const MultiscaleConfig& ms);

struct RegistrationResult {
  Image deformed;  // moving image interpolated exactly once, by phi_final
  DisplacementField phi_final;
  DisplacementField phi_global;
  DisplacementField phi_local;
};

RegistrationResult register_multiscale(const regnet::RegNetConfig& global_cfg,
                                       const regnet::RegNetParams& global_params,
                                       const regnet::RegNetConfig& local_cfg,
                                       const regnet::RegNetParams& local_params,
                                       const Image& moving, const Image& fixed,
                                       const MultiscaleConfig& ms);

// Training data for the local stage: every pair is globally deformed and
// `patches_per_pair` seeded random patch pairs are cut from (deformed, fixed).
trainer::PairDataset build_local_training_set(const regnet::RegNetConfig& global_cfg,
                                              const regnet::RegNetParams& global_params,
                                              const trainer::PairDataset& data,
                                              const MultiscaleConfig& ms, int patches_per_pair,
                                              std::uint64_t seed);

// The pair dataset block-averaged by the global factors (global-stage training).
trainer::PairDataset downsample_dataset(const trainer::PairDataset& data,
                                        const std::vector<int>& factors);

}  // namespace cm::multiscale

#pragma once

#include "cyclemorph/rng.hpp"
#include "cyclemorph/trainer.hpp"

namespace cm::synthbench {

// Procedural registration benchmark: smooth folding-free random warps applied
// to rendered blob images, with consistently transported labels and landmarks.
struct SynthConfig {
  std::vector<int> lattice = {64, 64};
  int num_pairs = 10;
  double amplitude = 4.0;  // max displacement magnitude, voxels
  double sigma = 6.0;      // smoothing width of the noise fields, voxels
  int num_shapes = 6;      // rendered ellipses per image
  int num_landmarks = 10;
  std::uint64_t seed = 0;
  bool intensity_remap = false;  // monotone gamma remap of the moving image
  int max_retries = 25;

  void validate() const;
};

// Component-wise white noise, Gaussian-smoothed at sigma, scaled to max
// magnitude `amplitude`; regenerated until the folding check passes.
DisplacementField random_smooth_field(const SynthConfig& cfg, RandomStream& rng);

// Renders the fixed image (+labels +landmarks) and synthesizes the moving
// image by warping it with a known field. Correspondence: moving voxel p
// matches fixed location p + phi_true(p).
trainer::PairSample make_pair(const SynthConfig& cfg, std::uint64_t pair_seed);

// Writes pairs/NNNN/{moving,fixed,phi_true,labels_*}.dtf + landmarks_*.csv
// and a manifest.json with the config and per-file checksums.
void generate(const SynthConfig& cfg, const std::string& out_dir);

// Loads a benchmark directory (ground truth included when present).
trainer::PairDataset load_dataset(const std::string& dir, bool with_truth = true);

}  // namespace cm::synthbench

#pragma once

#include <map>
#include <optional>
#include <string>

#include "cyclemorph/image.hpp"
#include "cyclemorph/regnet.hpp"

namespace cm::metrics {

// Percentage of interior voxels where the mapping v -> v + phi(v) has a
// non-positive Jacobian determinant (central differences; boundary voxels are
// excluded). `literal_field_jacobian` drops the identity term and tests
// det(d phi / d v) instead.
double folding_percentage(const DisplacementField& phi, bool literal_field_jacobian = false);

struct DiceResult {
  std::map<int, double> per_label;   // labels present in at least one map
  std::vector<int> undefined_labels; // requested labels absent from both
  double mean = 0.0;                 // over defined labels
};

// 2TP / (2TP + FP + FN) per label; label 0 (background) is not scored.
// With an empty `labels` list every non-zero label present in either map is
// scored.
DiceResult dice(const LabelMap& a, const LabelMap& b, const std::vector<int>& labels = {});

// Nearest-neighbour transport of a categorical map along phi.
LabelMap warp_labels(const LabelMap& labels, const DisplacementField& phi);

// Mean Euclidean distance between corresponding points, scaled by per-axis
// spacing (millimetres when spacing is mm/voxel).
double tre(const LandmarkSet& a, const LandmarkSet& b, const std::vector<double>& spacing);

struct NmseSsim {
  double nmse = 0.0;
  double ssim = 0.0;
};

// nmse = |A-B|^2 / |B|^2 ; ssim = mean local SSIM over clipped 7-edge windows
// with C1=0.01^2, C2=0.03^2 for unit dynamic range (population statistics).
NmseSsim nmse_ssim(const Image& a, const Image& b);

// Registers x forward, then registers the deformed result back toward x with
// the same forward network applied to the swapped pair, and scores the
// reconstruction against the original.
NmseSsim reverse_consistency(const regnet::RegNetConfig& cfg, const regnet::RegNetParams& params,
                             const Image& x, const Image& y);

// Endpoint error of a predicted field against the known synthesis warp:
// at voxel v the residual of the round trip phi_pred(v) + phi_true(v + phi_pred(v)).
// A zero prediction scores |phi_true| (the no-registration baseline).
struct EpeStats {
  double mean = 0.0;
  double median = 0.0;
};
EpeStats endpoint_error(const DisplacementField& phi_pred, const DisplacementField& phi_true);

// mean |phi(v)| over voxels
double mean_magnitude(const DisplacementField& phi);

struct EvalReport {
  std::optional<double> nmse;
  std::optional<double> ssim;
  std::map<int, double> dice_per_label;
  std::optional<double> dice_mean;
  std::optional<double> tre;
  std::optional<double> folding_pct;
  std::optional<double> reverse_nmse;
  std::optional<double> reverse_ssim;
  std::optional<double> epe_mean;
  std::optional<double> epe_median;
  double runtime_seconds = 0.0;

  std::string to_json() const;  // absent metrics serialize as null
  static EvalReport from_json(const std::string& text);
};

double median(std::vector<double> values);

}  // namespace cm::metrics

#pragma once

#include <iosfwd>
#include <optional>

#include "cyclemorph/image.hpp"
#include "cyclemorph/losses.hpp"
#include "cyclemorph/regnet.hpp"

namespace cm::trainer {

// One (moving, fixed) pair plus whatever ground truth the benchmark provides.
struct PairSample {
  Image moving;
  Image fixed;
  bool has_truth = false;
  DisplacementField phi_true;
  LabelMap labels_moving, labels_fixed;
  LandmarkSet landmarks_moving, landmarks_fixed;
  std::string dir;
};

struct PairDataset {
  std::vector<PairSample> pairs;
  bool empty() const { return pairs.empty(); }
  size_t size() const { return pairs.size(); }
};

struct TrainConfig {
  losses::HyperParams hp;
  regnet::RegNetConfig net;
  double learning_rate = 2e-4;
  int epochs = 1;
  int batch_size = 1;  // one pair per update
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool augment_flips = false;
  bool augment_rot90 = false;
  int checkpoint_every = 0;  // epochs between checkpoint writes; 0 = final only
  bool alternate_updates = false;  // update one network per step instead of both

  void validate() const;
};

// Loss-component record for one step, serialized as one JSON line.
struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double reg_fwd = 0, reg_rev = 0, cycle = 0, identity = 0, total = 0;
  std::string json_line() const;
};

// Cycle-consistent two-network trainer; both networks live in one parameter
// map under the "fwd." and "rev." prefixes and are updated from one joint
// objective per step.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  static Trainer resume(TrainConfig cfg, const std::string& checkpoint_path);

  // One optimization step on a pair; throws NumericError with the offending
  // component when the loss goes non-finite.
  StepRecord step(const Tensor& moving, const Tensor& fixed);

  // Epochs over seeded shuffles of the dataset with optional augmentation;
  // writes checkpoints to `checkpoint_path` per cadence and JSON lines to
  // `log` when given. Resumable at epoch granularity.
  void fit(const PairDataset& data, const std::string& checkpoint_path,
           std::ostream* log = nullptr);

  const regnet::RegNetParams& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t steps_done() const { return step_; }
  int epochs_done() const { return epoch_done_; }

  void save_checkpoint(const std::string& path) const;

 private:
  void apply_adam(const std::unordered_map<int, Tensor>& grads,
                  const std::map<std::string, int>& leaf_ids);

  TrainConfig cfg_;
  regnet::RegNetParams params_;
  regnet::RegNetParams adam_m_, adam_v_;
  std::int64_t step_ = 0;
  int epoch_done_ = 0;
};

// Pre-flight compatibility check used by fit and the CLI (lattice agreement,
// divisibility, unit intensity range).
void check_dataset(const PairDataset& data, const TrainConfig& cfg);

// axis-aligned augmentation helpers (shared transform for both pair images)
Tensor flip_tensor(const Tensor& t, int spatial_axis);
Tensor rot90_tensor(const Tensor& t, int quarter_turns);  // last two axes

}  // namespace cm::trainer

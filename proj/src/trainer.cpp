#include "cyclemorph/trainer.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace cm::trainer {

void TrainConfig::validate() const {
  hp.validate();
  net.validate();
  if (learning_rate < 0) throw ConfigError("train: learning rate must be >= 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size != 1) throw ConfigError("train: batch size is fixed to 1");
}

std::string StepRecord::json_line() const {
  nlohmann::json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["L_regist_xy"] = reg_fwd;
  j["L_regist_yx"] = reg_rev;
  j["L_cycle"] = cycle;
  j["L_identity"] = identity;
  j["total"] = total;
  return j.dump();
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  auto fwd = regnet::init(cfg_.net, derive_seed(cfg_.seed, 0x66776400));
  auto rev = regnet::init(cfg_.net, derive_seed(cfg_.seed, 0x72657600));
  for (auto& [name, t] : fwd) params_.emplace("fwd." + name, std::move(t));
  for (auto& [name, t] : rev) params_.emplace("rev." + name, std::move(t));
  for (const auto& [name, t] : params_) {
    adam_m_.emplace(name, Tensor(t.shape));
    adam_v_.emplace(name, Tensor(t.shape));
  }
}

Trainer Trainer::resume(TrainConfig cfg, const std::string& checkpoint_path) {
  Trainer tr(std::move(cfg));
  auto entries = regnet::load_named_tensors(checkpoint_path);
  regnet::RegNetParams params, m, v;
  std::int64_t step = 0;
  int epoch = 0;
  for (auto& [name, t] : entries) {
    if (name.rfind("opt.m.", 0) == 0) {
      m.emplace(name.substr(6), std::move(t));
    } else if (name.rfind("opt.v.", 0) == 0) {
      v.emplace(name.substr(6), std::move(t));
    } else if (name == "opt.step") {
      step = static_cast<std::int64_t>(t.data[0]);
    } else if (name == "opt.epoch") {
      epoch = static_cast<int>(t.data[0]);
    } else {
      params.emplace(name, std::move(t));
    }
  }
  regnet::validate_params(tr.cfg_.net, params, "fwd.");
  regnet::validate_params(tr.cfg_.net, params, "rev.");
  if (m.size() != params.size() || v.size() != params.size())
    throw IoError("checkpoint: optimizer state incomplete; cannot resume");
  tr.params_ = std::move(params);
  tr.adam_m_ = std::move(m);
  tr.adam_v_ = std::move(v);
  tr.step_ = step;
  tr.epoch_done_ = epoch;
  return tr;
}

void Trainer::save_checkpoint(const std::string& path) const {
  std::map<std::string, Tensor> entries = params_;
  for (const auto& [name, t] : adam_m_) entries.emplace("opt.m." + name, t);
  for (const auto& [name, t] : adam_v_) entries.emplace("opt.v." + name, t);
  Tensor step_t({1});
  step_t.data[0] = static_cast<float>(step_);
  Tensor epoch_t({1});
  epoch_t.data[0] = static_cast<float>(epoch_done_);
  entries.emplace("opt.step", std::move(step_t));
  entries.emplace("opt.epoch", std::move(epoch_t));
  regnet::save_named_tensors(path, entries);
}

StepRecord Trainer::step(const Tensor& moving, const Tensor& fixed) {
  Tape tape;
  auto vars = regnet::params_to_vars<float>(tape, params_, true);
  std::map<std::string, int> leaf_ids;
  for (const auto& [name, var] : vars) leaf_ids.emplace(name, var.id);

  Var x = tape.leaf(moving);
  Var y = tape.leaf(fixed);
  losses::NetFn<float> net_fwd = [&](Var m, Var f) {
    return regnet::forward<float>(cfg_.net, vars, m, f, "fwd.");
  };
  losses::NetFn<float> net_rev = [&](Var m, Var f) {
    return regnet::forward<float>(cfg_.net, vars, m, f, "rev.");
  };
  auto loss = losses::total_loss<float>(x, y, net_fwd, net_rev, cfg_.hp);

  StepRecord rec;
  rec.step = step_ + 1;
  rec.epoch = epoch_done_;
  rec.reg_fwd = loss.reg_fwd;
  rec.reg_rev = loss.reg_rev;
  rec.cycle = loss.cycle;
  rec.identity = loss.identity;
  rec.total = loss.total_value;
  const struct {
    const char* name;
    double v;
  } comps[] = {{"L_regist_xy", rec.reg_fwd},
               {"L_regist_yx", rec.reg_rev},
               {"L_cycle", rec.cycle},
               {"L_identity", rec.identity},
               {"total", rec.total}};
  for (const auto& c : comps)
    if (!std::isfinite(c.v))
      throw NumericError("train_step " + std::to_string(rec.step) +
                         ": non-finite loss component " + c.name);

  auto grads = tape.backward(loss.total);
  apply_adam(grads, leaf_ids);
  ++step_;
  return rec;
}

void Trainer::apply_adam(const std::unordered_map<int, Tensor>& grads,
                         const std::map<std::string, int>& leaf_ids) {
  const auto t = static_cast<double>(step_ + 1);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const float lr = static_cast<float>(cfg_.learning_rate);
  const float eps = static_cast<float>(cfg_.adam_eps);
  // alternating mode trains one network per step, fwd on even steps
  const bool skip_fwd = cfg_.alternate_updates && (step_ % 2 == 1);
  const bool skip_rev = cfg_.alternate_updates && (step_ % 2 == 0);

  for (auto& [name, p] : params_) {
    const auto it = leaf_ids.find(name);
    const auto git = grads.find(it->second);
    if (git == grads.end()) continue;
    if ((skip_fwd && name.rfind("fwd.", 0) == 0) || (skip_rev && name.rfind("rev.", 0) == 0))
      continue;
    const Tensor& g = git->second;
    Tensor& m = adam_m_.at(name);
    Tensor& v = adam_v_.at(name);
    float* pp = p.data.data();
    float* mp = m.data.data();
    float* vp = v.data.data();
    const float* gp = g.data.data();
    const std::int64_t n = p.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      mp[i] = b1 * mp[i] + (1.0f - b1) * gp[i];
      vp[i] = b2 * vp[i] + (1.0f - b2) * gp[i] * gp[i];
      const float mhat = mp[i] / static_cast<float>(bc1);
      const float vhat = vp[i] / static_cast<float>(bc2);
      pp[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void check_dataset(const PairDataset& data, const TrainConfig& cfg) {
  if (data.empty()) throw ConfigError("train: dataset is empty");
  const auto lattice = data.pairs.front().moving.lattice();
  const int div = cfg.net.divisibility();
  for (const auto& pair : data.pairs) {
    if (pair.moving.channels() != 1 || pair.fixed.channels() != 1)
      throw ConfigError("train: registration inputs must be single-channel");
    if (pair.moving.lattice() != lattice || pair.fixed.lattice() != lattice)
      throw ConfigError("train: all pairs must share one lattice");
    if (pair.moving.spatial_rank() != cfg.net.spatial_rank)
      throw ConfigError("train: dataset rank does not match network rank");
    check_unit_range("train", pair.moving);
    check_unit_range("train", pair.fixed);
  }
  for (int e : lattice)
    if (e % div != 0)
      throw ConfigError("train: lattice extents must be divisible by " + std::to_string(div));
  if (cfg.augment_rot90) {
    const auto& l = lattice;
    if (l[l.size() - 1] != l[l.size() - 2])
      throw ConfigError("train: rot90 augmentation needs square in-plane extents");
  }
}

Tensor flip_tensor(const Tensor& t, int spatial_axis) {
  const int axis = spatial_axis + 1;
  if (axis < 1 || axis >= t.rank()) throw ShapeError("flip: bad spatial axis");
  Tensor out(t.shape);
  const int n = t.shape[static_cast<size_t>(axis)];
  auto st = t.strides();
  const std::int64_t stride = st[static_cast<size_t>(axis)];
  const std::int64_t inner = stride;
  const std::int64_t outer = t.numel() / (static_cast<std::int64_t>(n) * inner);
  for (std::int64_t o = 0; o < outer; ++o)
    for (int j = 0; j < n; ++j)
      for (std::int64_t i = 0; i < inner; ++i)
        out.data[static_cast<size_t>(o * n * inner + j * stride + i)] =
            t.data[static_cast<size_t>(o * n * inner + (n - 1 - j) * stride + i)];
  return out;
}

Tensor rot90_tensor(const Tensor& t, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  Tensor cur = t;
  const int rank = t.rank();
  const int ah = rank - 2, aw = rank - 1;  // last two axes
  while (k-- > 0) {
    const int h = cur.shape[static_cast<size_t>(ah)], w = cur.shape[static_cast<size_t>(aw)];
    std::vector<int> os = cur.shape;
    os[static_cast<size_t>(ah)] = w;
    os[static_cast<size_t>(aw)] = h;
    Tensor next(os);
    const std::int64_t planes = cur.numel() / (static_cast<std::int64_t>(h) * w);
    for (std::int64_t pl = 0; pl < planes; ++pl) {
      const float* src = cur.data.data() + pl * h * w;
      float* dst = next.data.data() + pl * h * w;
      // (y, x) -> (w-1-x, y)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[static_cast<std::int64_t>(w - 1 - x) * h + y] =
              src[static_cast<std::int64_t>(y) * w + x];
    }
    cur = std::move(next);
  }
  return cur;
}

void Trainer::fit(const PairDataset& data, const std::string& checkpoint_path,
                  std::ostream* log) {
  check_dataset(data, cfg_);
  for (int epoch = epoch_done_; epoch < cfg_.epochs; ++epoch) {
    RandomStream rng(derive_seed(cfg_.seed, 0x45500000ULL + static_cast<std::uint64_t>(epoch)));
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (size_t idx : order) {
      Tensor moving = data.pairs[idx].moving.values;
      Tensor fixed = data.pairs[idx].fixed.values;
      if (cfg_.augment_flips) {
        for (int a = 0; a < cfg_.net.spatial_rank; ++a) {
          if (rng.uniform() < 0.5) {
            moving = flip_tensor(moving, a);
            fixed = flip_tensor(fixed, a);
          }
        }
      }
      if (cfg_.augment_rot90) {
        const int k = static_cast<int>(rng.index(4));
        if (k) {
          moving = rot90_tensor(moving, k);
          fixed = rot90_tensor(fixed, k);
        }
      }
      StepRecord rec = step(moving, fixed);
      rec.epoch = epoch;
      if (log) (*log) << rec.json_line() << '\n';
    }
    epoch_done_ = epoch + 1;
    if (cfg_.checkpoint_every > 0 && (epoch_done_ % cfg_.checkpoint_every) == 0)
      save_checkpoint(checkpoint_path);
  }
  save_checkpoint(checkpoint_path);
}

}  // namespace cm::trainer

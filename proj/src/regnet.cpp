#include "cyclemorph/regnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "cyclemorph/dtf.hpp"

namespace cm::regnet {

void RegNetConfig::validate() const {
  if (spatial_rank != 2 && spatial_rank != 3)
    throw ConfigError("regnet: spatial_rank must be 2 or 3");
  if (enc_widths.empty()) throw ConfigError("regnet: encoder widths empty");
  if (dec_widths.size() != enc_widths.size() + 1)
    throw ConfigError("regnet: decoder needs exactly one more conv than encoder levels");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("regnet: kernel edge must be odd");
  for (int wd : enc_widths)
    if (wd <= 0) throw ConfigError("regnet: non-positive encoder width");
  for (int wd : dec_widths)
    if (wd <= 0) throw ConfigError("regnet: non-positive decoder width");
}

std::vector<LayerSpec> layer_specs(const RegNetConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> specs;
  const int levels = cfg.levels();
  int ch = 2;  // moving + fixed concatenated
  std::vector<int> skip_ch{2};
  for (int i = 0; i < levels; ++i) {
    specs.push_back({"enc" + std::to_string(i), ch, cfg.enc_widths[static_cast<size_t>(i)], 2, true});
    ch = cfg.enc_widths[static_cast<size_t>(i)];
    if (i + 1 < levels) skip_ch.push_back(ch);
  }
  for (size_t i = 0; i < cfg.dec_widths.size(); ++i) {
    specs.push_back({"dec" + std::to_string(i), ch, cfg.dec_widths[i], 1, true});
    ch = cfg.dec_widths[i];
    if (i < static_cast<size_t>(levels))
      ch += skip_ch[static_cast<size_t>(levels - 1 - static_cast<int>(i))];
  }
  specs.push_back({"flow", ch, cfg.spatial_rank, 1, false});
  return specs;
}

namespace {

std::vector<int> kernel_shape(const RegNetConfig& cfg, const LayerSpec& spec) {
  std::vector<int> s{spec.out_ch, spec.in_ch};
  for (int i = 0; i < cfg.spatial_rank; ++i) s.push_back(cfg.kernel);
  return s;
}

}  // namespace

RegNetParams init(const RegNetConfig& cfg, std::uint64_t seed) {
  RandomStream rng(seed);
  RegNetParams params;
  for (const auto& spec : layer_specs(cfg)) {
    Tensor w(kernel_shape(cfg, spec));
    double fan_in = spec.in_ch;
    for (int i = 0; i < cfg.spatial_rank; ++i) fan_in *= cfg.kernel;
    const double std_dev =
        spec.name == "flow" ? cfg.final_init_std : std::sqrt(2.0 / fan_in);
    for (auto& v : w.data) v = static_cast<float>(rng.gaussian() * std_dev);
    Tensor b({spec.out_ch});
    params.emplace(spec.name + ".w", std::move(w));
    params.emplace(spec.name + ".b", std::move(b));
  }
  return params;
}

void validate_params(const RegNetConfig& cfg, const RegNetParams& params,
                     const std::string& prefix) {
  std::string missing, unexpected, mismatched;
  auto specs = layer_specs(cfg);
  std::map<std::string, std::vector<int>> expect;
  for (const auto& spec : specs) {
    expect[prefix + spec.name + ".w"] = kernel_shape(cfg, spec);
    expect[prefix + spec.name + ".b"] = {spec.out_ch};
  }
  for (const auto& [name, shape] : expect) {
    auto it = params.find(name);
    if (it == params.end()) {
      missing += (missing.empty() ? "" : ", ") + name;
    } else if (it->second.shape != shape) {
      mismatched += (mismatched.empty() ? "" : ", ") + name + " expected " + shape_str(shape) +
                    " got " + shape_str(it->second.shape);
    }
  }
  for (const auto& [name, t] : params) {
    (void)t;
    if (name.rfind(prefix, 0) == 0 && !expect.count(name))
      unexpected += (unexpected.empty() ? "" : ", ") + name;
  }
  if (!missing.empty() || !unexpected.empty() || !mismatched.empty()) {
    std::string msg = "checkpoint does not match network config.";
    if (!missing.empty()) msg += " missing: " + missing + ".";
    if (!unexpected.empty()) msg += " unexpected: " + unexpected + ".";
    if (!mismatched.empty()) msg += " shape mismatch: " + mismatched + ".";
    throw IoError(msg);
  }
}

template <typename T>
VarMap<T> params_to_vars(TapeT<T>& tape, const RegNetParams& params, bool requires_grad) {
  VarMap<T> out;
  for (const auto& [name, tensor] : params) {
    TensorT<T> t = tensor.template cast<T>();
    t.requires_grad = requires_grad;
    out.emplace(name, tape.leaf(std::move(t)));
  }
  return out;
}

template <typename T>
VarT<T> forward(const RegNetConfig& cfg, const VarMap<T>& p, VarT<T> moving, VarT<T> fixed,
                const std::string& prefix) {
  cfg.validate();
  const auto& mshape = moving.shape();
  if (mshape != fixed.shape()) throw_shape_error("regnet", mshape, fixed.shape());
  if (static_cast<int>(mshape.size()) != cfg.spatial_rank + 1 || mshape[0] != 1)
    throw ShapeError("regnet: inputs must be single-channel [1,spatial...], got " +
                     shape_str(mshape));
  const int div = cfg.divisibility();
  for (size_t i = 1; i < mshape.size(); ++i)
    if (mshape[i] % div != 0)
      throw ShapeError("regnet: spatial extents must be divisible by " + std::to_string(div) +
                       ", got " + shape_str(mshape));

  auto param = [&](const std::string& name) -> VarT<T> {
    auto it = p.find(prefix + name);
    if (it == p.end()) throw IoError("regnet: missing parameter " + prefix + name);
    return it->second;
  };

  const int levels = cfg.levels();
  VarT<T> cur = ops::concat_channels(moving, fixed);
  std::vector<VarT<T>> skips{cur};
  for (int i = 0; i < levels; ++i) {
    const std::string n = "enc" + std::to_string(i);
    cur = ops::leaky_relu(ops::conv(cur, param(n + ".w"), param(n + ".b"), 2), cfg.leaky_slope);
    if (i + 1 < levels) skips.push_back(cur);
  }
  for (size_t i = 0; i < cfg.dec_widths.size(); ++i) {
    const std::string n = "dec" + std::to_string(i);
    cur = ops::leaky_relu(ops::conv(cur, param(n + ".w"), param(n + ".b"), 1), cfg.leaky_slope);
    if (i < static_cast<size_t>(levels)) {
      cur = ops::upsample_nearest(cur, 2);
      cur = ops::concat_channels(cur, skips[static_cast<size_t>(levels - 1 - static_cast<int>(i))]);
    }
  }
  return ops::conv(cur, param("flow.w"), param("flow.b"), 1);
}

Tensor forward_infer(const RegNetConfig& cfg, const RegNetParams& params, const Tensor& moving,
                     const Tensor& fixed, const std::string& prefix) {
  Tape tape;
  auto vars = params_to_vars<float>(tape, params, false);
  Var m = tape.leaf(moving);
  Var f = tape.leaf(fixed);
  return forward<float>(cfg, vars, m, f, prefix).value();
}

namespace {
constexpr char kCheckpointMagic[4] = {'C', 'M', 'K', '1'};
}

void save_named_tensors(const std::string& path, const std::map<std::string, Tensor>& entries) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
  f.write(kCheckpointMagic, 4);
  const std::uint32_t count = static_cast<std::uint32_t>(entries.size());
  f.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, tensor] : entries) {
    const std::uint16_t len = static_cast<std::uint16_t>(name.size());
    f.write(reinterpret_cast<const char*>(&len), 2);
    f.write(name.data(), len);
    dtf::write(f, tensor);
  }
  if (!f) throw IoError("checkpoint: write failed: " + path);
}

std::map<std::string, Tensor> load_named_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open: " + path);
  char magic[4] = {};
  if (!f.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  std::uint32_t count = 0;
  if (!f.read(reinterpret_cast<char*>(&count), 4)) throw IoError("checkpoint: truncated header");
  std::map<std::string, Tensor> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t len = 0;
    if (!f.read(reinterpret_cast<char*>(&len), 2)) throw IoError("checkpoint: truncated entry");
    std::string name(len, '\0');
    if (!f.read(name.data(), len)) throw IoError("checkpoint: truncated name");
    entries.emplace(std::move(name), dtf::read(f));
  }
  return entries;
}

void save(const RegNetParams& params, const std::string& path) {
  save_named_tensors(path, params);
}

RegNetParams load(const std::string& path) { return load_named_tensors(path); }

template VarMap<float> params_to_vars<float>(TapeT<float>&, const RegNetParams&, bool);
template VarMap<double> params_to_vars<double>(TapeT<double>&, const RegNetParams&, bool);
template VarT<float> forward<float>(const RegNetConfig&, const VarMap<float>&, VarT<float>,
                                    VarT<float>, const std::string&);
template VarT<double> forward<double>(const RegNetConfig&, const VarMap<double>&, VarT<double>,
                                      VarT<double>, const std::string&);

}  // namespace cm::regnet

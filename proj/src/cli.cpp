#include "cyclemorph/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include "cyclemorph/dtf.hpp"
#include "cyclemorph/metrics.hpp"
#include "cyclemorph/multiscale.hpp"
#include "cyclemorph/runio.hpp"
#include "cyclemorph/synthbench.hpp"

namespace fs = std::filesystem;

namespace cm::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void add_artifact(runio::RunManifest& manifest, const std::string& path) {
  manifest.artifact_checksums[path] = runio::fnv1a64_file_hex(path);
}

Image load_image(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".pgm") return read_pgm(path);
  return Image(dtf::read_file(path));
}

// checkpoint directory contents written by run_train
struct LoadedModel {
  trainer::TrainConfig cfg;
  multiscale::MultiscaleConfig ms;
  bool has_ms = false;
  regnet::RegNetParams global_params;
  regnet::RegNetParams local_params;
  bool has_local = false;
};

regnet::RegNetParams strip_opt_entries(std::map<std::string, Tensor> entries) {
  regnet::RegNetParams params;
  for (auto& [name, t] : entries)
    if (name.rfind("opt.", 0) != 0) params.emplace(name, std::move(t));
  return params;
}

LoadedModel load_model(const std::string& dir) {
  LoadedModel model;
  const auto cfg_path = (fs::path(dir) / "config.json").string();
  const auto j = runio::load_json_file(cfg_path);
  model.cfg = runio::train_config_from_json(j);
  if (j.contains("multiscale")) {
    model.has_ms = true;
    model.ms = runio::multiscale_config_from_json(j.at("multiscale"));
  }
  const auto global_path = (fs::path(dir) / "global.cmk").string();
  if (!fs::exists(global_path)) throw IoError("register: missing checkpoint " + global_path);
  model.global_params = strip_opt_entries(regnet::load_named_tensors(global_path));
  regnet::validate_params(model.cfg.net, model.global_params, "fwd.");
  regnet::validate_params(model.cfg.net, model.global_params, "rev.");
  const auto local_path = (fs::path(dir) / "local.cmk").string();
  if (fs::exists(local_path)) {
    model.has_local = true;
    model.local_params = strip_opt_entries(regnet::load_named_tensors(local_path));
    regnet::validate_params(model.cfg.net, model.local_params, "fwd.");
    regnet::validate_params(model.cfg.net, model.local_params, "rev.");
  }
  return model;
}

}  // namespace

void run_synth(const SynthArgs& args) {
  const auto start = Clock::now();
  auto cfg_json = runio::load_json_file(args.config_path);
  auto cfg = runio::synth_config_from_json(cfg_json);
  if (args.seed) cfg.seed = *args.seed;
  fs::create_directories(args.out_dir);
  synthbench::generate(cfg, args.out_dir);

  runio::RunManifest manifest;
  manifest.command = "synth";
  manifest.config = runio::to_json(cfg);
  manifest.seed = cfg.seed;
  manifest.input_checksums[args.config_path] = runio::fnv1a64_file_hex(args.config_path);
  add_artifact(manifest, (fs::path(args.out_dir) / "manifest.json").string());
  manifest.wall_seconds = seconds_since(start);
  manifest.write((fs::path(args.out_dir) / "run_manifest.json").string());
}

void run_train(const TrainArgs& args) {
  const auto start = Clock::now();
  auto cfg_json = runio::load_json_file(args.config_path);
  auto cfg = runio::train_config_from_json(cfg_json);
  if (args.seed) cfg.seed = *args.seed;
  if (args.sum_normalization) cfg.hp.normalization = losses::Normalization::kSum;

  auto data = synthbench::load_dataset(args.data_dir, /*with_truth=*/false);
  fs::create_directories(args.out_dir);

  runio::RunManifest manifest;
  manifest.command = "train";
  manifest.seed = cfg.seed;
  manifest.input_checksums[args.config_path] = runio::fnv1a64_file_hex(args.config_path);
  const auto data_manifest = (fs::path(args.data_dir) / "manifest.json").string();
  if (fs::exists(data_manifest))
    manifest.input_checksums[data_manifest] = runio::fnv1a64_file_hex(data_manifest);

  const auto global_ckpt = (fs::path(args.out_dir) / "global.cmk").string();
  const auto log_path = (fs::path(args.out_dir) / "train_log.jsonl").string();
  std::ofstream log(log_path);
  if (!log) throw IoError("train: cannot open log " + log_path);

  nlohmann::json cfg_out = runio::to_json(cfg);

  if (!args.multiscale) {
    trainer::check_dataset(data, cfg);
    auto tr = args.resume_path.empty() ? trainer::Trainer(cfg)
                                       : trainer::Trainer::resume(cfg, args.resume_path);
    tr.fit(data, global_ckpt, &log);
  } else {
    multiscale::MultiscaleConfig ms;
    if (cfg_json.contains("multiscale"))
      ms = runio::multiscale_config_from_json(cfg_json.at("multiscale"));
    const int rank = data.pairs.front().moving.spatial_rank();
    ms.validate(rank);
    cfg_out["multiscale"] = runio::to_json(ms);

    // stage 1: the global network trains on the block-averaged pairs
    auto coarse = multiscale::downsample_dataset(data, ms.global_factors);
    trainer::check_dataset(coarse, cfg);
    auto tr = args.resume_path.empty() ? trainer::Trainer(cfg)
                                       : trainer::Trainer::resume(cfg, args.resume_path);
    tr.fit(coarse, global_ckpt, &log);

    // stage 2: the local network trains on patches of the globally deformed
    // images against the original fixed images
    trainer::TrainConfig local_cfg = cfg;
    local_cfg.seed = derive_seed(cfg.seed, 0x6c6f6300);
    int patches_per_pair = 2;
    if (cfg_json.contains("local")) {
      const auto& lj = cfg_json.at("local");
      if (lj.contains("epochs")) local_cfg.epochs = lj.at("epochs").get<int>();
      if (lj.contains("learning_rate"))
        local_cfg.learning_rate = lj.at("learning_rate").get<double>();
      if (lj.contains("patches_per_pair"))
        patches_per_pair = lj.at("patches_per_pair").get<int>();
      cfg_out["local"] = lj;
    }
    auto patches = multiscale::build_local_training_set(
        cfg.net, tr.params(), data, ms, patches_per_pair, derive_seed(cfg.seed, 0x70636800));
    trainer::check_dataset(patches, local_cfg);
    const auto local_ckpt = (fs::path(args.out_dir) / "local.cmk").string();
    trainer::Trainer local(local_cfg);
    local.fit(patches, local_ckpt, &log);
    add_artifact(manifest, local_ckpt);
  }

  log.close();
  const auto cfg_path = (fs::path(args.out_dir) / "config.json").string();
  runio::write_text_atomic(cfg_path, cfg_out.dump(2));
  manifest.config = cfg_out;
  add_artifact(manifest, global_ckpt);
  add_artifact(manifest, cfg_path);
  add_artifact(manifest, log_path);
  manifest.wall_seconds = seconds_since(start);
  manifest.write((fs::path(args.out_dir) / "run_manifest.json").string());
}

void run_register(const RegisterArgs& args) {
  const auto start = Clock::now();
  auto model = load_model(args.checkpoint_dir);
  Image moving = load_image(args.moving_path);
  Image fixed = load_image(args.fixed_path);
  if (moving.lattice() != fixed.lattice())
    throw ShapeError("register: moving and fixed lattices differ");
  fs::create_directories(args.out_dir);

  DisplacementField phi_final;
  Image deformed;
  if (args.multiscale) {
    if (!model.has_local)
      throw ConfigError("register: --multiscale needs a local.cmk next to global.cmk");
    auto ms = model.has_ms ? model.ms : multiscale::MultiscaleConfig{};
    if (static_cast<int>(ms.global_factors.size()) != moving.spatial_rank())
      ms.global_factors.assign(static_cast<size_t>(moving.spatial_rank()), 2);
    if (args.plain_sum_fusion) ms.compose_mode = warp::ComposeMode::kPlainSum;
    auto result = multiscale::register_multiscale(model.cfg.net, model.global_params,
                                                  model.cfg.net, model.local_params, moving,
                                                  fixed, ms);
    phi_final = std::move(result.phi_final);
    deformed = std::move(result.deformed);
  } else {
    phi_final = DisplacementField(
        regnet::forward_infer(model.cfg.net, model.global_params, moving.values, fixed.values,
                              "fwd."));
    deformed = warp::spatial_transform(moving, phi_final);
  }

  const auto deformed_path = (fs::path(args.out_dir) / "deformed.dtf").string();
  const auto phi_path = (fs::path(args.out_dir) / "phi_final.dtf").string();
  dtf::write_file(deformed_path, deformed.values);
  dtf::write_file(phi_path, phi_final.values);

  runio::RunManifest manifest;
  manifest.command = "register";
  manifest.seed = model.cfg.seed;
  nlohmann::json cfg;
  cfg["checkpoints"] = args.checkpoint_dir;
  cfg["multiscale"] = args.multiscale;
  cfg["plain_sum_fusion"] = args.plain_sum_fusion;
  manifest.config = cfg;
  manifest.input_checksums[args.moving_path] = runio::fnv1a64_file_hex(args.moving_path);
  manifest.input_checksums[args.fixed_path] = runio::fnv1a64_file_hex(args.fixed_path);
  add_artifact(manifest, deformed_path);
  add_artifact(manifest, phi_path);
  manifest.wall_seconds = seconds_since(start);
  manifest.write((fs::path(args.out_dir) / "run_manifest.json").string());
}

void run_eval(const EvalArgs& args) {
  Image deformed(dtf::read_file((fs::path(args.pred_dir) / "deformed.dtf").string()));
  DisplacementField phi(dtf::read_file((fs::path(args.pred_dir) / "phi_final.dtf").string()));

  const fs::path truth(args.truth_dir);
  Image fixed(dtf::read_file((truth / "fixed.dtf").string()));
  Image moving(dtf::read_file((truth / "moving.dtf").string()));

  metrics::EvalReport report;
  auto ns = metrics::nmse_ssim(deformed, fixed);
  report.nmse = ns.nmse;
  report.ssim = ns.ssim;
  report.folding_pct = metrics::folding_percentage(phi);

  if (fs::exists(truth / "labels_moving.dtf") && fs::exists(truth / "labels_fixed.dtf")) {
    auto labels_moving = LabelMap::from_tensor(dtf::read_file((truth / "labels_moving.dtf").string()));
    auto labels_fixed = LabelMap::from_tensor(dtf::read_file((truth / "labels_fixed.dtf").string()));
    auto d = metrics::dice(metrics::warp_labels(labels_moving, phi), labels_fixed);
    report.dice_per_label = d.per_label;
    report.dice_mean = d.mean;
  }

  if (fs::exists(truth / "landmarks_moving.csv") && fs::exists(truth / "landmarks_fixed.csv")) {
    auto lm = read_landmarks_csv((truth / "landmarks_moving.csv").string());
    auto lf = read_landmarks_csv((truth / "landmarks_fixed.csv").string());
    // a fixed-grid landmark q corresponds to q + phi(q) in the moving image;
    // perfect registration lands on the matching moving-space landmark
    LandmarkSet predicted;
    predicted.rank = lf.rank;
    for (const auto& q : lf.points) {
      std::vector<double> pos(q.begin(), q.begin() + lf.rank);
      auto disp = warp::sample_field(phi, pos);
      std::array<double, 3> m{0, 0, 0};
      for (int d = 0; d < lf.rank; ++d)
        m[static_cast<size_t>(d)] = q[static_cast<size_t>(d)] + disp[static_cast<size_t>(d)];
      predicted.points.push_back(m);
    }
    report.tre =
        metrics::tre(predicted, lm, std::vector<double>(static_cast<size_t>(lf.rank), 1.0));
  }

  if (fs::exists(truth / "phi_true.dtf")) {
    DisplacementField phi_true(dtf::read_file((truth / "phi_true.dtf").string()));
    auto epe = metrics::endpoint_error(phi, phi_true);
    report.epe_mean = epe.mean;
    report.epe_median = epe.median;
  }

  if (!args.checkpoint_dir.empty()) {
    auto model = load_model(args.checkpoint_dir);
    auto rc = metrics::reverse_consistency(model.cfg.net, model.global_params, moving, fixed);
    report.reverse_nmse = rc.nmse;
    report.reverse_ssim = rc.ssim;
  }

  // registration runtime travels with the register-step manifest
  const auto pred_manifest = (fs::path(args.pred_dir) / "run_manifest.json").string();
  if (fs::exists(pred_manifest)) {
    const auto j = runio::load_json_file(pred_manifest);
    report.runtime_seconds = j.value("wall_seconds", 0.0);
  }

  if (args.plots && deformed.spatial_rank() == 2) {
    try {
      const auto lattice = deformed.lattice();
      Tensor diff({lattice[0], lattice[1]});
      for (std::int64_t i = 0; i < diff.numel(); ++i)
        diff[i] = std::min(1.0f, std::abs(deformed.values[i] - fixed.values[i]) * 4.0f);
      const fs::path out_dir = fs::path(args.out_path).parent_path();
      runio::write_png_gray((out_dir / "difference.png").string(), diff);
      runio::write_quiver_svg((out_dir / "field_quiver.svg").string(), phi);
    } catch (const std::exception&) {
      // plots are best-effort; the numbers are the contract
    }
  }

  runio::write_text_atomic(args.out_path, report.to_json());
}

}  // namespace cm::cli

// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: train-sam, train-vam, fuse, infer, eval.
// Exit status: 0 ok, 2 user error, 3 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "dcrsr/fusion.hpp"
#include "dcrsr/metrics.hpp"
#include "dcrsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace dcrsr;

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 2;
constexpr int kRuntimeError = 3;

struct TrainArgs {
  std::string config;
  std::string sam_ckpt;
  std::vector<std::string> overrides;
  bool resume = false;
  bool print_config = false;
};

TrainConfig effective_config(const TrainArgs& a, Phase expected) {
  TrainConfig cfg = load_config(a.config);
  apply_overrides(cfg, a.overrides);
  if (cfg.phase != expected) throw ConfigError(std::string("config phase must be ") + to_string(expected));
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& a, Phase phase) {
  TrainConfig cfg;
  DatasetManifest manifest;
  Checkpoint sam;
  try {
    cfg = effective_config(a, phase);
    if (a.print_config) {
      std::cout << dump_config(cfg);
      return kOk;
    }
    manifest = load_manifest(cfg.data_root, cfg.model.generator.scale);
    for (const auto& w : manifest.warnings) std::cerr << "warning: skipped " << w << '\n';
    if (phase == Phase::VAM) {
      sam = Checkpoint::load(a.sam_ckpt);
      if (sam.config_hash != cfg.model.hash()) {
        throw CheckpointError("SAM checkpoint topology (" + sam.meta["model"] + ") does not match config (" +
                              cfg.model.describe() + ")");
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  }

  try {
    const std::string dir = cfg.resolved_out_dir();
    fs::create_directories(dir);
    {
      std::ofstream m(fs::path(dir) / "manifest.tsv");
      m << manifest.dump();
    }
    RunOptions opt;
    opt.resume = a.resume;
    const Checkpoint ck = phase == Phase::SAM ? train_sam(cfg, manifest, opt) : train_vam(cfg, manifest, sam, opt);
    std::cout << "wrote " << checkpoint_path(dir, phase, detail::parse_i64(ck.meta_at("iter"))).string() << '\n';
    return kOk;
  } catch (const TrainingAborted& e) {
    std::cerr << "error: training aborted: " << e.what() << '\n';
    std::cerr << "last checkpoint: " << (e.last_checkpoint().empty() ? "(none)" : e.last_checkpoint()) << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

int run_fuse(const std::string& sam_path, const std::string& vam_path, double alpha, const std::string& out) {
  Checkpoint sam, vam;
  SRModel<float> a, b;
  try {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw FusionError("alpha must lie in [0, 1]");
    sam = Checkpoint::load(sam_path);
    vam = Checkpoint::load(vam_path);
    a = load_model(sam);
    b = load_model(vam);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  }
  try {
    const SRModel<float> fused = fuse_models(a, b, alpha);
    Checkpoint ck;
    ck.config_hash = fused.config.hash();
    ck.tensors = fused.to_tensors();
    for (const auto& [k, v] : sam.meta) {
      if (k.rfind("config.model.", 0) == 0) ck.meta[k] = v;
    }
    ck.meta["model"] = fused.config.describe();
    ck.meta["fused_alpha"] = detail::fmt_double(alpha);
    ck.meta["fused_from"] = sam_path + "," + vam_path;
    ck.save(out);
    std::cout << "wrote " << out << '\n';
    return kOk;
  } catch (const FusionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

int run_infer(const std::string& ckpt, const std::string& in, const std::string& out, const std::string& blend_with,
              double alpha) {
  SRModel<float> model;
  std::optional<SRModel<float>> other;
  std::vector<std::pair<fs::path, fs::path>> jobs;
  try {
    model = load_model(Checkpoint::load(ckpt));
    if (!blend_with.empty()) {
      if (!(alpha >= 0.0 && alpha <= 1.0)) throw FusionError("alpha must lie in [0, 1]");
      other = load_model(Checkpoint::load(blend_with));
    }
    if (fs::is_directory(in)) {
      for (const auto& p : list_pngs(in)) jobs.emplace_back(p, fs::path(out) / p.filename());
      if (jobs.empty()) throw ImageIoError("no PNG files in " + in);
    } else {
      jobs.emplace_back(in, out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  }
  for (const auto& [src, dst] : jobs) {
    ImageTensor lr;
    try {
      lr = read_png(src);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kUserError;
    }
    try {
      ImageTensor sr = super_resolve(model, lr);
      if (other) {
        const ImageTensor sr2 = super_resolve(*other, lr);
        const Tensor<float> mix = blend_outputs(to_batch<float>(sr), to_batch<float>(sr2), alpha);
        sr = from_batch(mix, 0, ColorSpace::rgb);
      }
      write_png(dst, sr);
      std::cout << src.string() << " -> " << dst.string() << " (" << sr.width << "x" << sr.height << ")\n";
    } catch (const std::exception& e) {
      std::cerr << "error: " << src.string() << ": " << e.what() << '\n';
      return kRuntimeError;
    }
  }
  return kOk;
}

int run_eval(const std::string& sr_dir, const std::string& hr_dir, int shave, bool rgb, bool tsv) {
  if (shave < 0) {
    std::cerr << "error: --shave must be >= 0\n";
    return kUserError;
  }
  EvalConfig cfg;
  cfg.shave = shave;
  cfg.on_luma = !rgb;
  const MetricReport r = evaluate(sr_dir, hr_dir, cfg);
  std::cout << (tsv ? r.tsv() : r.table());
  for (const auto& p : r.problems) std::cerr << "error: " << p << '\n';
  return r.ok() ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-reconstruction DCR super-resolution toolkit"};
  app.require_subcommand(1);

  TrainArgs sam_args;
  auto* sam = app.add_subcommand("train-sam", "pixel-loss pre-training (SAM)");
  sam->add_option("--config", sam_args.config, "config file (key = value)")->required();
  sam->add_flag("--resume", sam_args.resume, "continue from the latest checkpoint in train.out_dir");
  sam->add_flag("--print-config", sam_args.print_config, "print the effective config and exit");
  sam->add_option("overrides", sam_args.overrides, "key=value overrides");

  TrainArgs vam_args;
  auto* vam = app.add_subcommand("train-vam", "adversarial fine-tuning (VAM) from a SAM checkpoint");
  vam->add_option("--config", vam_args.config, "config file (key = value)")->required();
  vam->add_option("--sam", vam_args.sam_ckpt, "SAM checkpoint")->required();
  vam->add_flag("--resume", vam_args.resume, "continue from the latest VAM checkpoint in train.out_dir");
  vam->add_flag("--print-config", vam_args.print_config, "print the effective config and exit");
  vam->add_option("overrides", vam_args.overrides, "key=value overrides");

  std::string fuse_sam, fuse_vam, fuse_out;
  double fuse_alpha = 0.8;
  auto* fuse = app.add_subcommand("fuse", "parameter-space fusion alpha*SAM + (1-alpha)*VAM");
  fuse->add_option("--sam", fuse_sam, "SAM checkpoint")->required();
  fuse->add_option("--vam", fuse_vam, "VAM checkpoint")->required();
  fuse->add_option("--alpha", fuse_alpha, "weight of the SAM model")->capture_default_str();
  fuse->add_option("--out", fuse_out, "output checkpoint")->required();

  std::string inf_ckpt, inf_in, inf_out, inf_blend;
  double inf_alpha = 0.8;
  auto* infer = app.add_subcommand("infer", "super-resolve a PNG or a directory of PNGs");
  infer->add_option("--ckpt", inf_ckpt, "generator checkpoint")->required();
  infer->add_option("--in", inf_in, "input PNG or directory")->required();
  infer->add_option("--out", inf_out, "output PNG or directory")->required();
  infer->add_option("--blend-with", inf_blend, "second checkpoint for an output-space blend");
  infer->add_option("--alpha", inf_alpha, "blend weight of --ckpt")->capture_default_str();

  std::string ev_sr, ev_hr;
  int ev_shave = 4;
  bool ev_rgb = false, ev_tsv = false;
  auto* ev = app.add_subcommand("eval", "PSNR / SSIM of an SR directory against HR ground truth");
  ev->add_option("--sr", ev_sr, "super-resolved PNG directory")->required();
  ev->add_option("--hr", ev_hr, "ground-truth PNG directory")->required();
  ev->add_option("--shave", ev_shave, "border pixels removed before scoring")->capture_default_str();
  ev->add_flag("--rgb", ev_rgb, "score RGB instead of BT.601 luma");
  ev->add_flag("--tsv", ev_tsv, "machine-readable name<TAB>psnr<TAB>ssim output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUserError;
  }

  if (*sam) return run_train(sam_args, Phase::SAM);
  if (*vam) return run_train(vam_args, Phase::VAM);
  if (*fuse) return run_fuse(fuse_sam, fuse_vam, fuse_alpha, fuse_out);
  if (*infer) return run_infer(inf_ckpt, inf_in, inf_out, inf_blend, inf_alpha);
  if (*ev) return run_eval(ev_sr, ev_hr, ev_shave, ev_rgb, ev_tsv);
  return kUserError;
}

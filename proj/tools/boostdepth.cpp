#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "boostdepth/config.hpp"
#include "boostdepth/error.hpp"
#include "boostdepth/experiment.hpp"

namespace bd = boostdepth;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::optional<int> threads;
  bool dump_errors = false;
};

bd::ExperimentConfig load(const CommonOptions& o) {
  bd::ExperimentConfig cfg;
  if (!o.preset.empty()) bd::apply_preset(cfg, o.preset);
  if (!o.config.empty()) bd::load_config_file(cfg, o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.run.threads = *o.threads;
  cfg.validate();
  return cfg;
}

fs::path require_out(const CommonOptions& o) {
  if (o.out.empty()) throw bd::ConfigError("--out DIR is required");
  return o.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photometric depth optimization with baseline curricula, tri-minimization and incremental poses"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  app.add_option("--config", common.config, "key = value configuration file");
  app.add_option("--out", common.out, "output directory");
  app.add_option("--seed", common.seed, "seed for scene texture and pose noise");
  app.add_option("--preset", common.preset, "ablation preset")->check(CLI::IsMember({"md2", "warmup", "full", "pre"}));
  app.add_option("--threads", common.threads, "worker threads (targets run in parallel)")->check(CLI::PositiveNumber);
  app.add_flag("--dump-errors", common.dump_errors, "write per-pixel aggregated error maps");

  auto* synth = app.add_subcommand("synth", "render a synthetic scene");

  auto* optimize = app.add_subcommand("optimize", "optimize depth for a rendered scene");
  std::string scene_dir;
  std::string checkpoint;
  optimize->add_option("--scene", scene_dir, "scene directory written by synth")->required();
  optimize->add_option("--checkpoint", checkpoint, "checkpoint/ directory of an earlier run to start from");

  auto* eval = app.add_subcommand("eval", "score predicted depth maps against ground truth");
  std::string pred_dir;
  std::string gt_dir;
  bool median_scaling = false;
  eval->add_option("--pred", pred_dir, "directory of depth_NNN.pfm predictions")->required();
  eval->add_option("--gt", gt_dir, "scene directory with ground truth and manifest")->required();
  eval->add_flag("--median-scaling", median_scaling, "rescale predictions by median(gt)/median(pred)");

  auto* posesim = app.add_subcommand("posesim", "direct vs incremental pose drift table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (synth->parsed()) {
      const auto cfg = load(common);
      const fs::path out = require_out(common);
      const bd::Sequence seq = bd::cmd_synth(cfg, out);
      std::printf("wrote %d frames (%dx%d, %s) to %s\n", seq.size(), seq.intrinsics.width, seq.intrinsics.height,
                  bd::to_string(cfg.scene.layout), out.string().c_str());
    } else if (optimize->parsed()) {
      const auto cfg = load(common);
      const fs::path out = require_out(common);
      bd::OptimizeOptions options;
      options.dump_errors = common.dump_errors;
      if (!checkpoint.empty()) options.checkpoint = fs::path(checkpoint);
      const bd::RunResult result = bd::cmd_optimize(cfg, scene_dir, out, options);
      for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      const double final_loss = result.log.empty() ? 0.0 : result.log.back().loss;
      std::printf("optimized %zu target(s); final loss %.6g; outputs in %s\n", result.depths.size(), final_loss,
                  out.string().c_str());
    } else if (eval->parsed()) {
      auto cfg = load(common);
      if (median_scaling) cfg.metrics.median_scaling = true;
      const fs::path out = common.out.empty() ? fs::path() : fs::path(common.out);
      const bd::EvalResult r = bd::cmd_eval(pred_dir, gt_dir, cfg.metrics, out);
      const bd::MetricReport& a = r.aggregate;
      std::printf("images %zu  abs_rel %.4f  sq_rel %.4f  rmse %.4f  rmse_log %.4f  d1 %.3f  d2 %.3f  d3 %.3f\n",
                  r.images.size(), a.abs_rel, a.sq_rel, a.rmse, a.rmse_log, a.delta1, a.delta2, a.delta3);
      std::printf("edge_acc %.3f  edge_comp %.3f%s  chamfer %.4f  precision %.3f  recall %.3f  f %.3f  iou %.3f\n",
                  a.edge_acc, a.edge_comp, a.edge_flagged ? " (flagged)" : "", a.chamfer, a.precision, a.recall,
                  a.f_score, a.iou);
    } else if (posesim->parsed()) {
      const auto cfg = load(common);
      const fs::path out = require_out(common);
      const auto rows = bd::cmd_posesim(cfg, out);
      for (const auto& r : rows) {
        std::printf("n=%d %-11s mean %.6g std %.6g\n", r.separation, r.policy.c_str(), r.mean_error, r.std_error);
      }
    }
  } catch (const bd::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const bd::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const bd::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}

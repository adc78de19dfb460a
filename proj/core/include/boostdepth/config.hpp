#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "boostdepth/metrics.hpp"
#include "boostdepth/optimizer.hpp"
#include "boostdepth/photometric.hpp"
#include "boostdepth/pose_chain.hpp"
#include "boostdepth/synth_world.hpp"

namespace boostdepth {

/// Every tunable of the tool in one place. The single seed drives the scene
/// texture and the pose-estimator noise.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  SceneSpec scene;
  RunConfig run;
  LossConfig loss;
  EstimatorKind estimator = EstimatorKind::oracle;
  EstimatorKind base_estimator = EstimatorKind::noisy_oracle;
  DriftModel drift;
  int drift_max_separation = 7;
  MetricOptions metrics;
  bool snapshots = false;

  /// Scene spec with the seed applied.
  SceneSpec scene_spec() const;
  /// Drift model with the seed applied.
  DriftModel drift_model() const;
  void validate() const;
};

/// Applies an ablation preset: md2, warmup, full or pre.
void apply_preset(ExperimentConfig& cfg, const std::string& preset);

/// Sets one dotted key from its text form. Throws ConfigError for unknown keys
/// or unparsable values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// Every key in registry order.
std::vector<std::string> config_keys();

/// Parses `key = value` lines ('#' starts a comment, `[section]` prefixes the
/// following keys) into `cfg`.
void parse_config(ExperimentConfig& cfg, const std::string& text, const std::string& origin = "<config>");
void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

/// Effective configuration as `key = value` lines; parsing it back reproduces `cfg`.
std::string echo_config(const ExperimentConfig& cfg);

}  // namespace boostdepth

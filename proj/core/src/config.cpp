#include "boostdepth/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include "boostdepth/error.hpp"

namespace boostdepth {

SceneSpec ExperimentConfig::scene_spec() const {
  SceneSpec s = scene;
  s.seed = seed;
  return s;
}

DriftModel ExperimentConfig::drift_model() const {
  DriftModel d = drift;
  d.seed = seed;
  return d;
}

void ExperimentConfig::validate() const {
  scene_spec().validate();
  run.validate();
  loss.validate();
  drift_model().validate();
  metrics.validate();
  if (base_estimator == EstimatorKind::optimized) throw ConfigError("pose.base_estimator cannot be optimized");
  if (drift_max_separation < 1) throw ConfigError("pose.max_separation must be >= 1");
}

void apply_preset(ExperimentConfig& cfg, const std::string& preset) {
  RunConfig& r = cfg.run;
  if (preset == "full") {
    r.curriculum = true;
    r.tri_min = true;
    r.incremental_pose = true;
    r.partial_incremental = true;
    r.error_reconstructions = true;
  } else if (preset == "md2") {
    r.curriculum = false;
    r.tri_min = false;
    r.incremental_pose = false;
    r.partial_incremental = false;
    r.error_reconstructions = false;
    r.boost_scales = r.warmup_scales;
  } else if (preset == "warmup") {
    r.boost_epochs = 0;
  } else if (preset == "pre") {
    r.warmup_epochs = 0;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected md2, warmup, full or pre)");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("invalid value '" + text + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename Access>
Entry real(std::string key, Access access) {
  return {key, [access](const ExperimentConfig& c) { return fmt(access(c)); },
          [access, key](ExperimentConfig& c, const std::string& v) { access(c) = parse_number<double>(key, v); }};
}

template <typename Access>
Entry integer(std::string key, Access access) {
  return {key, [access](const ExperimentConfig& c) { return std::to_string(access(c)); },
          [access, key](ExperimentConfig& c, const std::string& v) {
            access(c) = parse_number<std::remove_reference_t<decltype(access(c))>>(key, v);
          }};
}

template <typename Access>
Entry boolean(std::string key, Access access) {
  return {key,
          [access](const ExperimentConfig& c) {
            return std::string(access(c) ? "true" : "false");
          },
          [access, key](ExperimentConfig& c, const std::string& v) { access(c) = parse_bool(key, v); }};
}

template <typename Access, typename ToString, typename FromString>
Entry enumeration(std::string key, Access access, ToString to, FromString from) {
  return {key, [access, to](const ExperimentConfig& c) { return std::string(to(access(c))); },
          [access, from](ExperimentConfig& c, const std::string& v) { access(c) = from(v); }};
}

Entry vector3(std::string key, Eigen::Vector3d SceneSpec::*member) {
  return {key,
          [member](const ExperimentConfig& c) {
            const Eigen::Vector3d& v = c.scene.*member;
            return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z());
          },
          [member, key](ExperimentConfig& c, const std::string& v) {
            const auto parts = split_list(v);
            if (parts.size() != 3) throw ConfigError(key + " needs three comma-separated numbers");
            for (int i = 0; i < 3; ++i) (c.scene.*member)(i) = parse_number<double>(key, parts[static_cast<std::size_t>(i)]);
          }};
}

Entry int_list(std::string key, std::vector<int> RunConfig::*member) {
  return {key,
          [member](const ExperimentConfig& c) {
            std::string s;
            for (int v : c.run.*member) s += (s.empty() ? "" : ", ") + std::to_string(v);
            return s;
          },
          [member, key](ExperimentConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& p : split_list(v)) out.push_back(parse_number<int>(key, p));
            c.run.*member = out;
          }};
}

#define FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(integer("seed", FIELD(seed)));

    e.push_back(enumeration("scene.layout", FIELD(scene.layout), [](Layout l) { return to_string(l); },
                            layout_from_string));
    e.push_back(integer("scene.width", FIELD(scene.width)));
    e.push_back(integer("scene.height", FIELD(scene.height)));
    e.push_back(real("scene.fx", FIELD(scene.fx)));
    e.push_back(real("scene.fy", FIELD(scene.fy)));
    e.push_back(real("scene.cx", FIELD(scene.cx)));
    e.push_back(real("scene.cy", FIELD(scene.cy)));
    e.push_back(integer("scene.frames", FIELD(scene.frames)));
    e.push_back(vector3("scene.velocity", &SceneSpec::velocity));
    e.push_back(real("scene.yaw_rate", FIELD(scene.yaw_rate)));
    e.push_back(real("scene.stereo_baseline", FIELD(scene.stereo_baseline)));
    e.push_back(real("scene.meters_per_unit", FIELD(scene.meters_per_unit)));
    e.push_back(real("scene.brightness.gain", FIELD(scene.brightness.gain)));
    e.push_back(real("scene.brightness.bias", FIELD(scene.brightness.bias)));
    e.push_back(integer("scene.texture.octaves", FIELD(scene.texture_octaves)));
    e.push_back(real("scene.texture.scale", FIELD(scene.texture_scale)));
    e.push_back(real("scene.texture.persistence", FIELD(scene.texture_persistence)));
    e.push_back(real("scene.texture.contrast", FIELD(scene.texture_contrast)));
    e.push_back(integer("scene.supersample", FIELD(scene.supersample)));
    e.push_back(real("scene.near_depth", FIELD(scene.near_depth)));
    e.push_back(real("scene.far_depth", FIELD(scene.far_depth)));
    e.push_back(real("scene.step_x", FIELD(scene.step_x)));
    e.push_back(real("scene.ramp.base", FIELD(scene.ramp_base)));
    e.push_back(real("scene.ramp.slope", FIELD(scene.ramp_slope)));
    e.push_back(real("scene.occluder.depth", FIELD(scene.occluder_depth)));
    e.push_back(real("scene.occluder.x0", FIELD(scene.occluder_x0)));
    e.push_back(real("scene.occluder.x1", FIELD(scene.occluder_x1)));
    e.push_back(real("scene.occluder.y0", FIELD(scene.occluder_y0)));
    e.push_back(real("scene.occluder.y1", FIELD(scene.occluder_y1)));

    e.push_back(integer("run.warmup_epochs", FIELD(run.warmup_epochs)));
    e.push_back(integer("run.boost_epochs", FIELD(run.boost_epochs)));
    e.push_back(integer("run.boost_start_epoch", FIELD(run.boost_start_epoch)));
    e.push_back(integer("run.iterations_per_epoch", FIELD(run.iterations_per_epoch)));
    e.push_back(real("run.learning_rate", FIELD(run.learning_rate)));
    e.push_back(real("run.lr_decay", FIELD(run.lr_decay)));
    e.push_back(int_list("run.lr_milestones", &RunConfig::lr_milestones));
    e.push_back(real("run.pose_learning_rate", FIELD(run.pose_learning_rate)));
    e.push_back(real("run.adam.beta1", FIELD(run.adam.beta1)));
    e.push_back(real("run.adam.beta2", FIELD(run.adam.beta2)));
    e.push_back(real("run.adam.epsilon", FIELD(run.adam.epsilon)));
    e.push_back(integer("run.warmup_scales", FIELD(run.warmup_scales)));
    e.push_back(integer("run.boost_scales", FIELD(run.boost_scales)));
    e.push_back(boolean("run.curriculum", FIELD(run.curriculum)));
    e.push_back(boolean("run.use_stereo", FIELD(run.use_stereo)));
    e.push_back(boolean("run.tri_min", FIELD(run.tri_min)));
    e.push_back(boolean("run.incremental_pose", FIELD(run.incremental_pose)));
    e.push_back(boolean("run.partial_incremental", FIELD(run.partial_incremental)));
    e.push_back(boolean("run.error_reconstructions", FIELD(run.error_reconstructions)));
    e.push_back(real("run.error_alpha", FIELD(run.error_alpha)));
    e.push_back(enumeration("run.targets", FIELD(run.targets), [](TargetSet t) { return to_string(t); },
                            target_set_from_string));
    e.push_back(int_list("run.target_list", &RunConfig::target_list));
    e.push_back(real("run.init_depth", FIELD(run.init_depth)));
    e.push_back(real("run.max_depth", FIELD(run.max_depth)));
    e.push_back(integer("run.threads", FIELD(run.threads)));
    e.push_back(boolean("run.snapshots", FIELD(snapshots)));

    e.push_back(real("curriculum.warmup_tau_intercept", FIELD(run.curriculum_params.warmup_tau_intercept)));
    e.push_back(real("curriculum.warmup_tau_slope", FIELD(run.curriculum_params.warmup_tau_slope)));
    e.push_back(integer("curriculum.warmup_max_offset", FIELD(run.curriculum_params.warmup_max_offset)));
    e.push_back(real("curriculum.boost_tau_intercept", FIELD(run.curriculum_params.boost_tau_intercept)));
    e.push_back(real("curriculum.boost_tau_slope", FIELD(run.curriculum_params.boost_tau_slope)));
    e.push_back(integer("curriculum.boost_max_offset", FIELD(run.curriculum_params.boost_max_offset)));
    e.push_back(real("curriculum.tri_tau_intercept", FIELD(run.curriculum_params.tri_tau_intercept)));
    e.push_back(real("curriculum.tri_tau_slope", FIELD(run.curriculum_params.tri_tau_slope)));
    e.push_back(integer("curriculum.tri_max_offset", FIELD(run.curriculum_params.tri_max_offset)));

    e.push_back(real("loss.ssim_weight", FIELD(loss.ssim_weight)));
    e.push_back(real("loss.smoothness_lambda", FIELD(loss.smoothness_lambda)));
    e.push_back(boolean("loss.automask", FIELD(loss.automask_enabled)));

    auto kind_to = [](EstimatorKind k) { return to_string(k); };
    e.push_back(enumeration("pose.estimator", FIELD(estimator), kind_to, estimator_kind_from_string));
    e.push_back(enumeration("pose.base_estimator", FIELD(base_estimator), kind_to, estimator_kind_from_string));
    e.push_back(real("pose.drift.c", FIELD(drift.c)));
    e.push_back(real("pose.drift.p", FIELD(drift.p)));
    e.push_back(real("pose.drift.rotation_noise_deg", FIELD(drift.rotation_noise_deg)));
    e.push_back(integer("pose.max_separation", FIELD(drift_max_separation)));

    e.push_back(boolean("metrics.median_scaling", FIELD(metrics.median_scaling)));
    e.push_back(real("metrics.min_depth", FIELD(metrics.min_depth)));
    e.push_back(real("metrics.max_depth", FIELD(metrics.max_depth)));
    e.push_back(real("metrics.edge_low", FIELD(metrics.edge_low)));
    e.push_back(real("metrics.edge_high", FIELD(metrics.edge_high)));
    e.push_back(real("metrics.edge_cap", FIELD(metrics.edge_cap)));
    e.push_back(enumeration("metrics.edge_orientation", FIELD(metrics.edge_orientation),
                            [](EdgeOrientation o) { return to_string(o); }, edge_orientation_from_string));
    e.push_back(real("metrics.pointcloud_delta", FIELD(metrics.pointcloud_delta)));
    return e;
  }();
  return entries;
}

#undef FIELD

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& e : registry()) {
    if (e.key == key) {
      e.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.push_back(e.key);
  return out;
}

void parse_config(ExperimentConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(number) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (!section.empty()) key = section + "." + key;
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  parse_config(cfg, ss.str(), path.string());
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : registry()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace boostdepth

#include "boostdepth/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <thread>

#include "boostdepth/error.hpp"

namespace boostdepth {

const char* to_string(TargetSet set) {
  switch (set) {
    case TargetSet::center:
      return "center";
    case TargetSet::all:
      return "all";
    case TargetSet::list:
      return "list";
  }
  return "?";
}

TargetSet target_set_from_string(const std::string& name) {
  if (name == "center") return TargetSet::center;
  if (name == "all") return TargetSet::all;
  if (name == "list") return TargetSet::list;
  throw ConfigError("unknown target set '" + name + "' (expected center, all or list)");
}

void RunConfig::validate() const {
  if (warmup_epochs < 0 || boost_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (warmup_epochs + boost_epochs == 0) throw ConfigError("run needs at least one epoch");
  if (boost_start_epoch < 0) throw ConfigError("boost_start_epoch must be >= 0");
  if (iterations_per_epoch < 1) throw ConfigError("iterations_per_epoch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0, 1]");
  if (!(pose_learning_rate >= 0.0)) throw ConfigError("pose_learning_rate must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0)) {
    throw ConfigError("Adam parameters out of range");
  }
  if (warmup_scales < 1 || warmup_scales > 6 || boost_scales < 1 || boost_scales > 6) {
    throw ConfigError("scales must be in [1, 6]");
  }
  if (!(error_alpha > 0.0)) throw ConfigError("error_alpha must be > 0");
  if (partial_incremental && !incremental_pose) {
    throw ConfigError("partial_incremental requires incremental_pose");
  }
  if (targets == TargetSet::list && target_list.empty()) throw ConfigError("target list is empty");
  if (!(init_depth <= 0.0 || (init_depth > kMinDepth && init_depth < max_depth))) {
    throw ConfigError("init_depth must lie inside (z_min, max_depth)");
  }
  if (!(max_depth > kMinDepth)) throw ConfigError("max_depth must exceed z_min");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  curriculum_params.validate();
}

double RunConfig::learning_rate_at(int epoch) const {
  double lr = learning_rate;
  for (int m : lr_milestones) {
    if (epoch >= m) lr *= lr_decay;
  }
  return lr;
}

PosePolicy RunConfig::pose_policy(Stage stage) const {
  PosePolicy p;
  p.error_alpha = error_alpha;
  if (stage == Stage::boost && incremental_pose) {
    p.mode = partial_incremental ? PoseMode::partial_incremental : PoseMode::full_incremental;
  }
  return p;
}

int level_extent(int full, int level) { return std::max(1, (full + (1 << level) - 1) >> level); }

namespace {

// Taps of half-pixel-centred linear interpolation from n_in samples to n_out samples.
struct Taps {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

Taps make_taps(int n_in, int n_out) {
  Taps t;
  t.i0.resize(static_cast<std::size_t>(n_out));
  t.i1.resize(static_cast<std::size_t>(n_out));
  t.w1.resize(static_cast<std::size_t>(n_out));
  const double ratio = static_cast<double>(n_in) / n_out;
  for (int o = 0; o < n_out; ++o) {
    const double s = std::clamp((o + 0.5) * ratio - 0.5, 0.0, static_cast<double>(n_in - 1));
    const int a = std::min(static_cast<int>(std::floor(s)), n_in - 1);
    const auto k = static_cast<std::size_t>(o);
    t.i0[k] = a;
    t.i1[k] = std::min(a + 1, n_in - 1);
    t.w1[k] = s - a;
  }
  return t;
}

}  // namespace

Grid<double> upsample(const Grid<double>& level, int width, int height) {
  if (level.width() == width && level.height() == height) return level;
  const Taps tx = make_taps(level.width(), width);
  const Taps ty = make_taps(level.height(), height);
  Grid<double> out(width, height, 1, 0.0);
  for (int y = 0; y < height; ++y) {
    const auto ky = static_cast<std::size_t>(y);
    const double wy = ty.w1[ky];
    for (int x = 0; x < width; ++x) {
      const auto kx = static_cast<std::size_t>(x);
      const double wx = tx.w1[kx];
      const double top = (1.0 - wx) * level(tx.i0[kx], ty.i0[ky]) + wx * level(tx.i1[kx], ty.i0[ky]);
      const double bottom = (1.0 - wx) * level(tx.i0[kx], ty.i1[ky]) + wx * level(tx.i1[kx], ty.i1[ky]);
      out(x, y) = (1.0 - wy) * top + wy * bottom;
    }
  }
  return out;
}

Grid<double> upsample_adjoint(const Grid<double>& full, int level_width, int level_height) {
  if (full.width() == level_width && full.height() == level_height) return full;
  const Taps tx = make_taps(level_width, full.width());
  const Taps ty = make_taps(level_height, full.height());
  Grid<double> out(level_width, level_height, 1, 0.0);
  for (int y = 0; y < full.height(); ++y) {
    const auto ky = static_cast<std::size_t>(y);
    const double wy = ty.w1[ky];
    for (int x = 0; x < full.width(); ++x) {
      const auto kx = static_cast<std::size_t>(x);
      const double wx = tx.w1[kx];
      const double g = full(x, y);
      out(tx.i0[kx], ty.i0[ky]) += (1.0 - wx) * (1.0 - wy) * g;
      out(tx.i1[kx], ty.i0[ky]) += wx * (1.0 - wy) * g;
      out(tx.i0[kx], ty.i1[ky]) += (1.0 - wx) * wy * g;
      out(tx.i1[kx], ty.i1[ky]) += wx * wy * g;
    }
  }
  return out;
}

OptimizerState OptimizerState::constant(int width, int height, int level_count, double depth) {
  if (width < 2 || height < 2) throw ConfigError("optimizer state needs at least 2x2 pixels");
  if (level_count < 1) throw ConfigError("optimizer state needs at least one level");
  if (!(depth > 0.0) || !std::isfinite(depth)) throw ConfigError("initial depth must be positive and finite");
  std::vector<Grid<double>> levels;
  for (int l = 0; l < level_count; ++l) {
    levels.emplace_back(level_extent(width, l), level_extent(height, l), 1, 0.0);
  }
  levels.back().fill(std::log(depth));
  return from_levels(std::move(levels));
}

OptimizerState OptimizerState::from_levels(std::vector<Grid<double>> levels) {
  if (levels.empty()) throw ConfigError("optimizer state needs at least one level");
  const int w = levels.front().width();
  const int h = levels.front().height();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const int li = static_cast<int>(l);
    if (levels[l].channels() != 1 || levels[l].width() != level_extent(w, li) ||
        levels[l].height() != level_extent(h, li)) {
      throw DataError("log-depth level " + std::to_string(l) + " has the wrong size");
    }
    for (double v : levels[l].data()) {
      if (!std::isfinite(v)) throw DataError("log-depth level " + std::to_string(l) + " is not finite");
    }
  }
  OptimizerState s;
  for (const auto& g : levels) {
    s.first_moment.emplace_back(g.width(), g.height(), 1, 0.0);
    s.second_moment.emplace_back(g.width(), g.height(), 1, 0.0);
  }
  s.levels = std::move(levels);
  return s;
}

Grid<double> OptimizerState::log_depth(int scale) const {
  if (scale < 0 || scale >= level_count()) throw ConfigError("scale outside the log-depth pyramid");
  Grid<double> out(width(), height(), 1, 0.0);
  for (int l = level_count() - 1; l >= scale; --l) {
    const Grid<double> up = upsample(levels[static_cast<std::size_t>(l)], width(), height());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += up[i];
  }
  return out;
}

DepthMap OptimizerState::depth(int scale, double max_depth) const {
  Grid<double> d = log_depth(scale);
  for (double& v : d.data()) v = std::clamp(std::exp(v), kMinDepth, max_depth);
  return DepthMap(std::move(d), Mask(width(), height(), 1, 1));
}

namespace {

// Everything evaluated for one source at one scale.
struct SourceTerm {
  SynthesisJacobian jac;
  ErrorMap error;
};

std::map<SourceId, SourcePose> source_poses(const PoseEstimator& est, const PosePolicy& policy,
                                            const std::vector<SourceId>& sources, int t, bool derivs) {
  if (derivs) return poses_with_derivatives(est, policy, sources, t);
  std::map<SourceId, SourcePose> out;
  for (auto& [id, pose] : poses_for_sources(est, policy, sources, t)) out[id] = {pose, {}};
  return out;
}

}  // namespace

LossEvaluation evaluate_loss(const OptimizerState& state, const FrameWindow& window,
                             const std::vector<SourceId>& sources, const PoseEstimator& estimator,
                             const StepSettings& settings, bool with_gradient) {
  settings.loss.validate();
  if (sources.empty()) throw DataError("no source frames for target " + std::to_string(window.target()));
  if (settings.scales < 1 || settings.scales > state.level_count()) {
    throw ConfigError("requested scales exceed the log-depth pyramid");
  }
  const Intrinsics& k = window.intrinsics();
  const int w = state.width();
  const int h = state.height();
  if (w != k.width || h != k.height) throw DataError("optimizer state does not match the frame size");
  const ImageBuffer& target = window.target_frame().image;

  const bool optimized = estimator.kind() == EstimatorKind::optimized;
  const PoseEstimator est = optimized ? estimator.with_corrections(state.corrections) : estimator;
  const bool pose_grad = with_gradient && optimized;
  const auto poses = source_poses(est, settings.policy, sources, window.target(), pose_grad);
  const bool error_recs = settings.error_reconstructions && settings.stage == Stage::boost;

  std::vector<ErrorMap> identity;
  identity.reserve(sources.size());
  for (const auto& id : sources) identity.push_back(photometric_error(target, window.frame(id).image, settings.loss));

  LossEvaluation ev;
  if (with_gradient) {
    for (const auto& g : state.levels) ev.gradient.emplace_back(g.width(), g.height(), 1, 0.0);
  }
  const double inv_scales = 1.0 / settings.scales;
  const double log_lo = std::log(kMinDepth);
  const double log_hi = std::log(settings.max_depth);

  for (int s = 0; s < settings.scales; ++s) {
    const Grid<double> logd = state.log_depth(s);
    DepthMap depth = DepthMap::constant(w, h, 1.0);
    for (std::size_t i = 0; i < logd.size(); ++i) depth.values[i] = std::exp(std::clamp(logd[i], log_lo, log_hi));

    std::vector<SourceTerm> terms;
    std::vector<std::size_t> term_source;  // index into `sources`
    for (std::size_t j = 0; j < sources.size(); ++j) {
      const SourcePose& sp = poses.at(sources[j]);
      const ImageBuffer& img = window.frame(sources[j]).image;
      SourceTerm term;
      term.jac = synthesize_with_jacobian(depth, img, sp.pose, k, pose_grad);
      term.error = photometric_error(target, term.jac.reconstruction.image, settings.loss,
                                     &term.jac.reconstruction.valid);
      terms.push_back(std::move(term));
      term_source.push_back(j);
    }
    const std::size_t standard = terms.size();
    if (error_recs) {
      for (std::size_t j = 0; j < sources.size(); ++j) {
        if (sources[j].stereo) continue;
        const RigidTransform pbar = error_induced_pose(poses.at(sources[j]).pose, settings.error_alpha);
        SourceTerm term;
        term.jac = synthesize_with_jacobian(depth, window.frame(sources[j]).image, pbar, k, false);
        term.error = photometric_error(target, term.jac.reconstruction.image, settings.loss,
                                       &term.jac.reconstruction.valid);
        terms.push_back(std::move(term));
        term_source.push_back(j);
      }
    }

    std::vector<ErrorMap> maps;
    maps.reserve(terms.size());
    for (const auto& t : terms) maps.push_back(t.error);
    const Aggregate agg = min_aggregate(maps);
    const Mask mu = automask_from_errors(identity, std::span<const ErrorMap>(maps.data(), standard), settings.loss,
                                         w, h);
    Mask use(w, h, 1, 0);
    std::size_t n = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < use.size(); ++i) {
      if (!agg.error.valid[i] || !mu[i]) continue;
      use[i] = 1;
      sum += agg.error.values[i];
      ++n;
    }
    if (n == 0) throw NumericError("no valid pixels after masking (scale " + std::to_string(s) + ")");
    const double photometric = sum / static_cast<double>(n);
    const double smooth = smoothness_loss(depth, target);
    const double scale_loss = photometric + settings.loss.smoothness_lambda * smooth;
    ev.scale_losses.push_back(scale_loss);
    if (s == 0) {
      ev.aggregated = agg.error.values;
      ev.aggregated_valid = use;
    }
    if (!with_gradient) continue;

    // dL/dD at this scale, then through exp and the pyramid.
    Grid<double> g_depth = smoothness_backward(depth, target);
    for (double& v : g_depth.data()) v *= settings.loss.smoothness_lambda * inv_scales;
    const double pixel_weight = inv_scales / static_cast<double>(n);
    for (std::size_t m = 0; m < terms.size(); ++m) {
      Grid<double> upstream(w, h, 1, 0.0);
      bool any = false;
      for (std::size_t i = 0; i < upstream.size(); ++i) {
        if (use[i] && agg.winner[i] == static_cast<int>(m)) {
          upstream[i] = pixel_weight;
          any = true;
        }
      }
      if (!any) continue;
      const SynthesisJacobian& jac = terms[m].jac;
      const ImageBuffer g_recon = photometric_error_backward(target, jac.reconstruction.image, upstream, settings.loss,
                                                               &jac.reconstruction.valid);
      const int ch = g_recon.channels();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int c = 0; c < ch; ++c) acc += g_recon(x, y, c) * jac.d_depth(x, y, c);
          g_depth(x, y) += acc;
        }
      }
      if (!pose_grad || m >= standard) continue;
      const SourcePose& sp = poses.at(sources[term_source[m]]);
      if (sp.derivatives.empty()) continue;
      // dL/dtheta = sum_p g_p . (dR x_p + dt) = <dR, sum_p g_p x_p^T> + (sum_p g_p) . dt
      Eigen::Matrix3d outer = Eigen::Matrix3d::Zero();
      Eigen::Vector3d gsum = Eigen::Vector3d::Zero();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          Eigen::Vector3d gp = Eigen::Vector3d::Zero();
          for (int c = 0; c < ch; ++c) {
            const double gr = g_recon(x, y, c);
            if (gr == 0.0) continue;
            gp += gr * Eigen::Vector3d(jac.d_point(x, y, 3 * c), jac.d_point(x, y, 3 * c + 1),
                                       jac.d_point(x, y, 3 * c + 2));
          }
          const Eigen::Vector3d xp(jac.target_points(x, y, 0), jac.target_points(x, y, 1),
                                   jac.target_points(x, y, 2));
          outer += gp * xp.transpose();
          gsum += gp;
        }
      }
      for (const PoseDerivative& d : sp.derivatives) {
        auto [it, inserted] = ev.pose_gradient.try_emplace(d.key, Vector6d::Zero());
        it->second(d.component) += (d.d_rotation.array() * outer.array()).sum() + gsum.dot(d.d_translation);
      }
    }
    Grid<double> g_log(w, h, 1, 0.0);
    for (std::size_t i = 0; i < g_log.size(); ++i) {
      const bool clamped = logd[i] < log_lo || logd[i] > log_hi;
      g_log[i] = clamped ? 0.0 : g_depth[i] * depth.values[i];
    }
    for (int l = s; l < state.level_count(); ++l) {
      Grid<double>& dst = ev.gradient[static_cast<std::size_t>(l)];
      const Grid<double> g = upsample_adjoint(g_log, dst.width(), dst.height());
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
  }
  double total = 0.0;
  for (double v : ev.scale_losses) total += v;
  ev.loss = total * inv_scales;
  if (!std::isfinite(ev.loss)) throw NumericError("loss is not finite");
  return ev;
}

double step(OptimizerState& state, const FrameWindow& window, const std::vector<SourceId>& sources,
            const PoseEstimator& estimator, const StepSettings& settings) {
  const LossEvaluation ev = evaluate_loss(state, window, sources, estimator, settings, true);
  const AdamParams& a = settings.adam;
  ++state.step;
  const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < state.levels.size(); ++l) {
    Grid<double>& p = state.levels[l];
    Grid<double>& m = state.first_moment[l];
    Grid<double>& v = state.second_moment[l];
    const Grid<double>& g = ev.gradient[l];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g[i];
      v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g[i] * g[i];
      p[i] -= settings.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + a.epsilon);
    }
  }
  if (!ev.pose_gradient.empty() && settings.pose_learning_rate > 0.0) {
    ++state.pose_step;
    const double p1 = 1.0 - std::pow(a.beta1, static_cast<double>(state.pose_step));
    const double p2 = 1.0 - std::pow(a.beta2, static_cast<double>(state.pose_step));
    for (const auto& [key, g] : ev.pose_gradient) {
      Vector6d& m = state.pose_first_moment.try_emplace(key, Vector6d::Zero()).first->second;
      Vector6d& v = state.pose_second_moment.try_emplace(key, Vector6d::Zero()).first->second;
      m = a.beta1 * m + (1.0 - a.beta1) * g;
      v = a.beta2 * v + (1.0 - a.beta2) * g.cwiseProduct(g);
      const Vector6d delta =
          -settings.pose_learning_rate * (m / p1).cwiseQuotient(((v / p2).cwiseSqrt().array() + a.epsilon).matrix());
      RigidTransform& corr = state.corrections.try_emplace(key, RigidTransform()).first->second;
      corr = RigidTransform::exp(delta) * corr;
    }
  }
  // Keep exp(scale-0 log-depth) inside [z_min, d_max] by adjusting the finest level.
  const Grid<double> composite = state.log_depth(0);
  const double lo = std::log(kMinDepth);
  const double hi = std::log(settings.max_depth);
  Grid<double>& finest = state.levels.front();
  for (std::size_t i = 0; i < finest.size(); ++i) {
    finest[i] += std::clamp(composite[i], lo, hi) - composite[i];
  }
  return ev.loss;
}

GradientCheckResult gradient_check(const OptimizerState& state, const FrameWindow& window,
                                   const std::vector<SourceId>& sources, const PoseEstimator& estimator,
                                   const StepSettings& settings, int samples, std::uint64_t seed, double h,
                                   int level) {
  if (samples < 1) throw ConfigError("gradient_check needs at least one sample");
  if (!(h > 0.0)) throw ConfigError("gradient_check step must be > 0");
  if (level >= state.level_count()) throw ConfigError("gradient_check level outside the pyramid");
  const LossEvaluation ev = evaluate_loss(state, window, sources, estimator, settings, true);
  std::mt19937_64 rng(seed);
  std::size_t total = 0;
  for (const auto& g : state.levels) total += g.size();
  GradientCheckResult r;
  OptimizerState probe = state;
  for (int n = 0; n < samples; ++n) {
    std::size_t l = 0;
    std::size_t i = 0;
    if (level >= 0) {
      l = static_cast<std::size_t>(level);
      i = std::uniform_int_distribution<std::size_t>(0, state.levels[l].size() - 1)(rng);
    } else {
      std::size_t flat = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
      while (flat >= state.levels[l].size()) flat -= state.levels[l++].size();
      i = flat;
    }
    const double original = probe.levels[l][i];
    probe.levels[l][i] = original + h;
    const double plus = evaluate_loss(probe, window, sources, estimator, settings, false).loss;
    probe.levels[l][i] = original - h;
    const double minus = evaluate_loss(probe, window, sources, estimator, settings, false).loss;
    probe.levels[l][i] = original;
    const double numeric = (plus - minus) / (2.0 * h);
    const double analytic = ev.gradient[l][i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic - numeric) / denom);
    r.analytic.push_back(analytic);
    r.numeric.push_back(numeric);
    ++r.checked;
  }
  return r;
}

std::vector<int> resolve_targets(const RunConfig& cfg, const Sequence& sequence) {
  std::vector<int> out;
  switch (cfg.targets) {
    case TargetSet::center:
      out.push_back(sequence.size() / 2);
      break;
    case TargetSet::all:
      for (int i = 0; i < sequence.size(); ++i) out.push_back(i);
      break;
    case TargetSet::list:
      for (int t : cfg.target_list) {
        if (!sequence.has_frame(t)) throw ConfigError("target frame " + std::to_string(t) + " does not exist");
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
      }
      break;
  }
  return out;
}

EpochSources sources_for_epoch(const FrameWindow& window, const PoseEstimator& estimator, const RunConfig& cfg,
                               int epoch, Stage stage) {
  const int t = window.target();
  WindowExtent extent = window.extent();
  extent.has_stereo = extent.has_stereo && cfg.use_stereo;
  EpochSources out;
  if (!cfg.curriculum) {
    out.schedule.stage = stage;
    out.schedule.epoch = epoch;
    out.selection = fixed_adjacent_sources(cfg.use_stereo, extent, &out.dropped);
  } else {
    const Sequence& seq = window.sequence();
    if (seq.has_frame(t + 1)) {
      out.baseline = estimator.estimate(t, t + 1).translation().norm();
    } else if (seq.has_frame(t - 1)) {
      out.baseline = estimator.estimate(t, t - 1).translation().norm();
    }
    CurriculumParams params = cfg.curriculum_params;
    params.use_stereo = params.use_stereo && cfg.use_stereo;
    out.schedule = schedule_for_epoch(epoch, stage, cfg.tri_min, params);
    const BaselineModel model{out.baseline, seq.spec.stereo_baseline};
    out.selection = expand_sources(select_source(model, out.schedule), cfg.tri_min, extent, &out.dropped);
    if (out.selection.sources.empty()) {
      // Everything the rules asked for lies outside a short sequence: retry with the
      // candidate offsets limited to what the window holds.
      const int reach = std::max(1, std::max(extent.max_forward, extent.max_backward));
      params.warmup_max_offset = std::min(params.warmup_max_offset, reach);
      params.boost_max_offset = std::min(params.boost_max_offset, reach);
      params.tri_max_offset = std::min(params.tri_max_offset, reach);
      out.schedule = schedule_for_epoch(epoch, stage, cfg.tri_min, params);
      out.dropped.clear();
      out.selection = expand_sources(select_source(model, out.schedule), cfg.tri_min, extent, &out.dropped);
      out.narrowed = true;
    }
  }
  if (out.selection.sources.empty()) {
    throw DataError("no source frame available for target " + std::to_string(t) + " in epoch " +
                    std::to_string(epoch));
  }
  return out;
}

StepSettings settings_for_epoch(const RunConfig& cfg, const LossConfig& loss_cfg, int epoch, Stage stage) {
  StepSettings s;
  s.stage = stage;
  s.scales = stage == Stage::warmup ? cfg.warmup_scales : cfg.boost_scales;
  s.loss = loss_cfg;
  s.policy = cfg.pose_policy(stage);
  s.error_reconstructions = cfg.error_reconstructions && stage == Stage::boost;
  s.error_alpha = cfg.error_alpha;
  s.learning_rate = cfg.learning_rate_at(epoch);
  s.pose_learning_rate = cfg.pose_learning_rate * (s.learning_rate / cfg.learning_rate);
  s.adam = cfg.adam;
  s.max_depth = cfg.max_depth;
  return s;
}

namespace {

std::string join_sources(const std::vector<SourceId>& ids) {
  std::string s;
  for (const auto& id : ids) {
    if (!s.empty()) s += ' ';
    s += id.str();
  }
  return s;
}

double median_depth(const DepthMap& d) {
  std::vector<double> v;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.valid[i]) v.push_back(d.values[i]);
  }
  if (v.empty()) throw DataError("ground-truth depth has no valid pixel");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

struct TargetRun {
  DepthMap depth;
  OptimizerState state;
  std::vector<LogRow> log;
  std::vector<std::string> warnings;
};

TargetRun run_target(std::shared_ptr<const Sequence> sequence, int t, const PoseEstimator& estimator,
                     const RunConfig& cfg, const LossConfig& loss_cfg, const OptimizerState* initial,
                     const EpochCallback& on_epoch) {
  const FrameWindow window(sequence, t);
  const int levels = std::max(cfg.warmup_epochs > 0 ? cfg.warmup_scales : 1, cfg.boost_scales);
  TargetRun out;
  if (initial != nullptr) {
    out.state = *initial;
    if (out.state.level_count() < levels) throw ConfigError("initial state has fewer levels than scales");
  } else {
    const double d0 = cfg.init_depth > 0.0 ? cfg.init_depth : median_depth(window.target_frame().depth);
    out.state = OptimizerState::constant(window.intrinsics().width, window.intrinsics().height, levels,
                                         std::clamp(d0, 2.0 * kMinDepth, 0.5 * cfg.max_depth));
  }
  auto run_epoch = [&](int epoch, Stage stage) {
    const EpochSources src = sources_for_epoch(window, estimator, cfg, epoch, stage);
    if (src.narrowed) {
      out.warnings.push_back("epoch " + std::to_string(epoch) + " target " + std::to_string(t) +
                             ": candidate offsets limited to the sequence window");
    }
    if (!src.dropped.empty()) {
      out.warnings.push_back("epoch " + std::to_string(epoch) + " target " + std::to_string(t) +
                             ": sources outside the sequence dropped: " + join_sources(src.dropped));
    }
    const StepSettings settings = settings_for_epoch(cfg, loss_cfg, epoch, stage);
    double sum = 0.0;
    for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
      sum += step(out.state, window, src.selection.sources, estimator, settings);
    }
    LogRow row;
    row.epoch = epoch;
    row.iteration = out.state.step;
    row.target = t;
    row.loss = sum / cfg.iterations_per_epoch;
    row.lr = settings.learning_rate;
    row.stage = stage;
    row.sources = join_sources(src.selection.sources);
    out.log.push_back(row);
    if (on_epoch) on_epoch(epoch, t, out.state.depth(0, cfg.max_depth));
  };
  for (int e = 0; e < cfg.warmup_epochs; ++e) run_epoch(e, Stage::warmup);
  for (int e = 0; e < cfg.boost_epochs; ++e) run_epoch(cfg.boost_start_epoch + e, Stage::boost);
  out.depth = out.state.depth(0, cfg.max_depth);
  return out;
}

}  // namespace

RunResult run(std::shared_ptr<const Sequence> sequence, const PoseEstimator& estimator, const RunConfig& cfg,
              const LossConfig& loss_cfg, const std::map<int, OptimizerState>* initial,
              const EpochCallback& on_epoch) {
  cfg.validate();
  loss_cfg.validate();
  if (!sequence) throw DataError("run needs a sequence");
  const std::vector<int> targets = resolve_targets(cfg, *sequence);
  std::vector<TargetRun> results(targets.size());
  std::vector<std::exception_ptr> errors(targets.size());
  auto work = [&](std::size_t i) {
    try {
      const OptimizerState* init = nullptr;
      if (initial != nullptr) {
        const auto it = initial->find(targets[i]);
        if (it == initial->end()) throw DataError("no initial state for target " + std::to_string(targets[i]));
        init = &it->second;
      }
      results[i] = run_target(sequence, targets[i], estimator, cfg, loss_cfg, init, on_epoch);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), targets.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < targets.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < targets.size(); i = next++) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  RunResult r;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    r.depths.emplace(targets[i], std::move(results[i].depth));
    r.states.emplace(targets[i], std::move(results[i].state));
    r.log.insert(r.log.end(), results[i].log.begin(), results[i].log.end());
    r.warnings.insert(r.warnings.end(), results[i].warnings.begin(), results[i].warnings.end());
  }
  return r;
}

std::string log_to_csv(const std::vector<LogRow>& log) {
  std::string out = "epoch,iteration,target,loss,lr,stage,sources\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%ld,%d,%.17g,%.17g,%s,", r.epoch, r.iteration, r.target, r.loss, r.lr,
                  to_string(r.stage));
    out += buf;
    out += r.sources;
    out += '\n';
  }
  return out;
}

}  // namespace boostdepth

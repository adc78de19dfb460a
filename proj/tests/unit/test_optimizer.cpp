#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <doctest.h>

#include "boostdepth/error.hpp"
#include "boostdepth/optimizer.hpp"
#include "helpers.hpp"

using namespace boostdepth;

namespace {

SceneSpec small_scene(Layout layout = Layout::two_plane_step) {
  SceneSpec s;
  s.layout = layout;
  s.width = 64;
  s.height = 48;
  s.fx = s.fy = 54.0;
  s.cx = 31.5;
  s.cy = 23.5;
  s.frames = 15;
  return s;
}

std::shared_ptr<const Sequence> scene(const SceneSpec& s) { return std::make_shared<const Sequence>(render(s)); }

OptimizerState from_depth(const DepthMap& d, int levels) {
  OptimizerState st = OptimizerState::constant(d.width(), d.height(), levels, 1.0);
  for (auto& l : st.levels) l.fill(0.0);
  for (std::size_t i = 0; i < d.values.size(); ++i) st.levels[0][i] = std::log(d.values[i]);
  return st;
}

double norm(const std::vector<Grid<double>>& g) {
  double s = 0.0;
  for (const auto& l : g) {
    for (double v : l.data()) s += v * v;
  }
  return std::sqrt(s);
}

// Single-scale loss assembled from the public building blocks. Error-induced poses are
// passed in explicitly, so they stay fixed while the standard poses vary.
struct Reference {
  double loss = 0.0;
  bool error_won = false;
};

Reference reference_loss(const DepthMap& depth, const FrameWindow& w, const std::vector<SourceId>& sources,
                         const std::map<SourceId, RigidTransform>& poses,
                         const std::map<SourceId, RigidTransform>& error_poses, const LossConfig& cfg) {
  const ImageBuffer& target = w.target_frame().image;
  std::vector<ErrorMap> identity;
  std::vector<ErrorMap> maps;
  for (const auto& id : sources) {
    identity.push_back(photometric_error(target, w.frame(id).image, cfg));
    const Sampled r = synthesize(depth, w.frame(id).image, poses.at(id), w.intrinsics());
    maps.push_back(photometric_error(target, r.image, cfg, &r.valid));
  }
  const std::size_t standard = maps.size();
  for (const auto& id : sources) {
    const auto it = error_poses.find(id);
    if (it == error_poses.end()) continue;
    const Sampled r = synthesize(depth, w.frame(id).image, it->second, w.intrinsics());
    maps.push_back(photometric_error(target, r.image, cfg, &r.valid));
  }
  const Aggregate agg = min_aggregate(maps);
  const Mask mu = automask_from_errors(identity, std::span<const ErrorMap>(maps.data(), standard), cfg,
                                       depth.width(), depth.height());
  Reference out;
  out.loss = total_loss(agg.error, mu, depth, target, cfg);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu[i] && agg.winner[i] >= static_cast<int>(standard)) out.error_won = true;
  }
  return out;
}

}  // namespace

TEST_CASE("pyramid helpers") {
  CHECK(level_extent(64, 0) == 64);
  CHECK(level_extent(64, 3) == 8);
  CHECK(level_extent(96, 5) == 3);
  CHECK(level_extent(5, 1) == 3);
  CHECK(level_extent(5, 9) == 1);

  // Upsampling a constant is constant; the adjoint satisfies <Ux, y> = <x, U^T y>.
  const Grid<double> c = upsample(Grid<double>(5, 4, 1, 2.5), 17, 13);
  for (double v : c.data()) CHECK(v == doctest::Approx(2.5).epsilon(1e-15));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (auto [lw, lh, fw, fh] : {std::array<int, 4>{5, 4, 17, 13}, {8, 6, 64, 48}, {1, 1, 9, 7}, {9, 7, 9, 7}}) {
    Grid<double> x(lw, lh);
    Grid<double> y(fw, fh);
    for (auto& v : x.data()) v = n(rng);
    for (auto& v : y.data()) v = n(rng);
    const Grid<double> ux = upsample(x, fw, fh);
    const Grid<double> uty = upsample_adjoint(y, lw, lh);
    double a = 0.0;
    double b = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) a += ux[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) b += x[i] * uty[i];
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
  // Same size is the identity.
  Grid<double> x(9, 7);
  for (auto& v : x.data()) v = n(rng);
  CHECK(upsample(x, 9, 7) == x);
}

TEST_CASE("optimizer state") {
  const OptimizerState s = OptimizerState::constant(20, 10, 3, 4.0);
  CHECK(s.level_count() == 3);
  CHECK(s.levels[2].width() == 5);
  for (const auto g = s.log_depth(0); double v : g.data()) CHECK(v == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  for (const auto g = s.depth(1); double v : g.values.data()) CHECK(v == doctest::Approx(4.0).epsilon(1e-14));
  const OptimizerState huge = OptimizerState::constant(4, 4, 1, 1e6);
  for (const auto g = huge.depth(0, 100.0); double v : g.values.data()) CHECK(v == doctest::Approx(100.0));
  CHECK_THROWS_AS(OptimizerState::from_levels({Grid<double>(4, 4), Grid<double>(3, 2)}), DataError);
}

TEST_CASE("run config schedule") {
  RunConfig c;
  CHECK(c.learning_rate_at(0) == c.learning_rate);
  CHECK(c.learning_rate_at(10) == c.learning_rate);
  CHECK(c.learning_rate_at(11) == doctest::Approx(c.learning_rate * 0.4));
  CHECK(c.learning_rate_at(13) == doctest::Approx(c.learning_rate * 0.16));
  CHECK(c.learning_rate_at(19) == doctest::Approx(c.learning_rate * std::pow(0.4, 7)));
  CHECK(c.pose_policy(Stage::warmup).mode == PoseMode::direct);
  CHECK(c.pose_policy(Stage::boost).mode == PoseMode::partial_incremental);
  c.partial_incremental = false;
  CHECK(c.pose_policy(Stage::boost).mode == PoseMode::full_incremental);
  c.incremental_pose = false;
  CHECK(c.pose_policy(Stage::boost).mode == PoseMode::direct);
  c = RunConfig{};
  c.warmup_scales = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("sources per epoch") {
  auto seq = scene(small_scene());
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  RunConfig cfg;
  const FrameWindow centre(seq, 7);
  // b = |velocity| = 0.072: warmup epoch 0 (tau 0.1) picks s, epoch 2 (tau 0.18) picks t+2.
  EpochSources e = sources_for_epoch(centre, est, cfg, 0, Stage::warmup);
  CHECK(e.baseline == doctest::Approx(seq->spec.velocity.norm()).epsilon(1e-12));
  CHECK(e.selection.chosen == SourceId::stereo_partner());
  e = sources_for_epoch(centre, est, cfg, 2, Stage::warmup);
  CHECK(e.selection.chosen == SourceId::mono(2));
  CHECK(e.selection.sources.size() == 5);
  // Boost epoch 19 with tri-min: tau = 1.95, the widest candidate t+7 is chosen.
  e = sources_for_epoch(centre, est, cfg, 19, Stage::boost);
  CHECK(e.selection.chosen == SourceId::mono(7));
  CHECK(e.dropped.empty());

  const FrameWindow edge(seq, 1);
  e = sources_for_epoch(edge, est, cfg, 19, Stage::boost);
  CHECK(e.dropped.size() == 3);
  CHECK(e.selection.sources.size() == 3);

  // Seven frames: t+7 and its whole triplet lie outside, so the candidates shrink to +-3.
  SceneSpec short_spec = small_scene();
  short_spec.frames = 7;
  auto short_seq = scene(short_spec);
  const PoseEstimator short_est = PoseEstimator::for_sequence(*short_seq, EstimatorKind::oracle);
  e = sources_for_epoch(FrameWindow(short_seq, 3), short_est, cfg, 12, Stage::boost);
  CHECK(e.narrowed);
  CHECK(e.selection.chosen == SourceId::mono(3));
  CHECK(e.selection.sources.size() == 6);
  CHECK(e.dropped.empty());
  CHECK_FALSE(sources_for_epoch(centre, est, cfg, 12, Stage::boost).narrowed);

  cfg.curriculum = false;
  e = sources_for_epoch(centre, est, cfg, 15, Stage::boost);
  CHECK(e.selection.sources.size() == 3);
  cfg.use_stereo = false;
  e = sources_for_epoch(centre, est, cfg, 15, Stage::boost);
  CHECK(e.selection.sources.size() == 2);
}

TEST_CASE("gradient check on a textured scene") {
  auto seq = scene(small_scene());
  const FrameWindow w(seq, 7);
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  OptimizerState st = OptimizerState::constant(64, 48, 4, 2.8);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& l : st.levels) {
    for (auto& v : l.data()) v += n(rng);
  }
  RunConfig cfg;
  for (auto [epoch, stage] : {std::pair{3, Stage::warmup}, std::pair{14, Stage::boost}}) {
    const EpochSources src = sources_for_epoch(w, est, cfg, epoch, stage);
    const StepSettings settings = settings_for_epoch(cfg, LossConfig{}, epoch, stage);
    const GradientCheckResult r = gradient_check(st, w, src.selection.sources, est, settings, 40, 7, 1e-6, -1);
    CHECK(r.checked == 40);
    CHECK(r.max_relative_error < 1e-3);
  }
}

TEST_CASE("flat texture gives no photometric gradient") {
  // Hand-built sequence with uniform images: every reconstruction equals the target.
  Sequence seq;
  seq.spec = small_scene(Layout::textured_plane);
  seq.spec.frames = 3;
  seq.intrinsics = seq.spec.intrinsics();
  for (int i = 0; i < 3; ++i) {
    const RigidTransform pose = RigidTransform::from_translation({0.05 * (i - 1), 0.0, 0.0});
    seq.frames.push_back({ImageBuffer(64, 48, 3, 0.4), DepthMap::constant(64, 48, 3.0), pose});
    seq.stereo.push_back({ImageBuffer(64, 48, 3, 0.4), DepthMap::constant(64, 48, 3.0),
                          pose * RigidTransform::from_translation({0.1, 0, 0})});
  }
  auto shared = std::make_shared<const Sequence>(std::move(seq));
  const FrameWindow w(shared, 1);
  const PoseEstimator est = PoseEstimator::for_sequence(*shared, EstimatorKind::oracle);
  StepSettings settings;
  settings.loss.smoothness_lambda = 0.0;
  settings.loss.automask_enabled = false;
  OptimizerState st = OptimizerState::constant(64, 48, 1, 2.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto& v : st.levels[0].data()) v += n(rng);
  const LossEvaluation ev =
      evaluate_loss(st, w, {SourceId::mono(1), SourceId::mono(-1), SourceId::stereo_partner()}, est, settings);
  CHECK(ev.loss < 1e-15);
  CHECK(norm(ev.gradient) < 1e-12);
}

// Dyadic focal length, depth and translation with integer disparities: every
// reconstruction at the true depth samples pixel centres, so no interpolation error.
SceneSpec exact_scene() {
  SceneSpec s = small_scene(Layout::textured_plane);
  s.fx = s.fy = 64.0;
  s.far_depth = 4.0;
  s.velocity = Eigen::Vector3d(0.0625, 0.0, 0.0);
  s.supersample = 2;
  s.frames = 9;
  return s;
}

TEST_CASE("ground-truth depth sits at the loss floor") {
  auto seq = scene(exact_scene());
  const int t = 4;
  const FrameWindow w(seq, t);
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  const std::vector<SourceId> sources{SourceId::mono(1), SourceId::mono(-1), SourceId::mono(2), SourceId::mono(-2)};
  StepSettings settings;
  const OptimizerState truth = from_depth(seq->frames[t].depth, 1);
  OptimizerState off = truth;
  for (auto& v : off.levels[0].data()) v += std::log(1.5);
  const LossEvaluation at_truth = evaluate_loss(truth, w, sources, est, settings);
  const LossEvaluation perturbed = evaluate_loss(off, w, sources, est, settings);
  CHECK(at_truth.loss < 1e-12);
  CHECK(perturbed.loss > 1e-3);
  CHECK(norm(at_truth.gradient) < 1e-3 * norm(perturbed.gradient));

  // Every reconstruction beats its unwarped source at nearly all automask-true pixels.
  const ImageBuffer& target = w.target_frame().image;
  const auto poses = poses_for_sources(est, PosePolicy{}, sources, t);
  std::vector<ErrorMap> ident;
  std::vector<ErrorMap> recon;
  for (const auto& id : sources) {
    ident.push_back(photometric_error(target, w.frame(id).image, settings.loss));
    const Sampled r = synthesize(seq->frames[t].depth, w.frame(id).image, poses.at(id), w.intrinsics());
    recon.push_back(photometric_error(target, r.image, settings.loss, &r.valid));
  }
  const Mask mu = automask_from_errors(ident, recon, settings.loss, w.intrinsics().width, w.intrinsics().height);
  for (std::size_t j = 0; j < sources.size(); ++j) {
    std::size_t total = 0;
    std::size_t better = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      if (!mu[i] || !recon[j].valid[i]) continue;
      ++total;
      better += recon[j].values[i] <= ident[j].values[i];
    }
    CHECK(total > 2000);
    CHECK(static_cast<double>(better) >= 0.99 * static_cast<double>(total));
  }
}

TEST_CASE("perturbed depth: loss decreases over 50 steps") {
  auto seq = scene(small_scene(Layout::textured_plane));
  const FrameWindow w(seq, 7);
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  const std::vector<SourceId> sources{SourceId::mono(2), SourceId::mono(-2), SourceId::mono(1), SourceId::mono(-1)};
  OptimizerState st = OptimizerState::constant(64, 48, 4, 3.5 * 1.5);
  StepSettings settings;
  settings.scales = 4;
  const double first = evaluate_loss(st, w, sources, est, settings, false).loss;
  double last = first;
  for (int i = 0; i < 50; ++i) last = step(st, w, sources, est, settings);
  last = evaluate_loss(st, w, sources, est, settings, false).loss;
  CHECK(last < 0.5 * first);
}

TEST_CASE("loss is invariant under source reordering") {
  auto seq = scene(small_scene());
  const FrameWindow w(seq, 7);
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  RunConfig cfg;
  const EpochSources src = sources_for_epoch(w, est, cfg, 14, Stage::boost);
  const StepSettings settings = settings_for_epoch(cfg, LossConfig{}, 14, Stage::boost);
  const OptimizerState st = OptimizerState::constant(64, 48, 4, 3.0);
  std::vector<SourceId> order = src.selection.sources;
  const double ref = evaluate_loss(st, w, order, est, settings, false).loss;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(order.begin(), order.end(), rng);
    CHECK(evaluate_loss(st, w, order, est, settings, false).loss == ref);
  }
}

TEST_CASE("all flags off reduces to the single-pair objective") {
  auto seq = scene(small_scene());
  const FrameWindow w(seq, 7);
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  RunConfig cfg;
  cfg.curriculum = cfg.tri_min = cfg.incremental_pose = cfg.partial_incremental = cfg.error_reconstructions = false;
  cfg.boost_scales = 1;
  OptimizerState st = OptimizerState::constant(64, 48, 4, 3.0);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& v : st.levels[0].data()) v += n(rng);
  for (int epoch : {0, 15}) {
    const Stage stage = epoch < 10 ? Stage::warmup : Stage::boost;
    const EpochSources src = sources_for_epoch(w, est, cfg, epoch, stage);
    StepSettings settings = settings_for_epoch(cfg, LossConfig{}, epoch, stage);
    settings.scales = 1;
    const double got = evaluate_loss(st, w, src.selection.sources, est, settings, false).loss;
    const DepthMap depth = st.depth(0);
    std::map<SourceId, RigidTransform> poses;
    for (const auto& id : src.selection.sources) {
      poses[id] = id.stereo ? est.stereo(7) : est.estimate(7, 7 + id.offset);
    }
    const Reference ref = reference_loss(depth, w, src.selection.sources, poses, {}, LossConfig{});
    CHECK(got == doctest::Approx(ref.loss).epsilon(1e-12));
  }
}

TEST_CASE("error-induced reconstructions") {
  auto seq = scene(small_scene());
  const FrameWindow w(seq, 7);
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  RunConfig cfg;
  const EpochSources src = sources_for_epoch(w, est, cfg, 16, Stage::boost);
  StepSettings on = settings_for_epoch(cfg, LossConfig{}, 16, Stage::boost);
  StepSettings off = on;
  off.error_reconstructions = false;
  const OptimizerState st = OptimizerState::constant(64, 48, 4, 3.0);

  SUBCASE("alpha = 1 is bit-identical to the feature disabled") {
    on.error_alpha = 1.0;
    const LossEvaluation a = evaluate_loss(st, w, src.selection.sources, est, on);
    const LossEvaluation b = evaluate_loss(st, w, src.selection.sources, est, off);
    CHECK(a.loss == b.loss);
    CHECK(a.aggregated == b.aggregated);
    for (std::size_t l = 0; l < a.gradient.size(); ++l) CHECK(a.gradient[l] == b.gradient[l]);
  }
  SUBCASE("warmup never uses them") {
    StepSettings warm = on;
    warm.stage = Stage::warmup;
    StepSettings warm_off = off;
    warm_off.stage = Stage::warmup;
    CHECK(evaluate_loss(st, w, src.selection.sources, est, warm, false).loss ==
          evaluate_loss(st, w, src.selection.sources, est, warm_off, false).loss);
  }
}

TEST_CASE("pose gradient ignores the error-induced branch") {
  auto seq = scene(small_scene());
  const FrameWindow w(seq, 7);
  DriftModel drift;
  drift.seed = 3;
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::optimized, drift);
  const std::vector<SourceId> sources{SourceId::mono(3), SourceId::mono(2), SourceId::mono(-3), SourceId::mono(-2)};
  StepSettings settings;
  settings.stage = Stage::boost;
  settings.scales = 1;
  settings.error_reconstructions = true;
  settings.error_alpha = 5.5;
  settings.policy.mode = PoseMode::partial_incremental;
  OptimizerState st = OptimizerState::constant(64, 48, 1, 1.0);
  const DepthMap& gt = seq->frames[7].depth;
  for (std::size_t i = 0; i < gt.values.size(); ++i) st.levels[0][i] = std::log(gt.values[i] * 1.15);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.003);
  for (int a = 1; a <= 14; ++a) {
    for (int b : {a - 1, a + 1}) {
      Vector6d xi;
      for (int i = 0; i < 6; ++i) xi(i) = n(rng);
      st.corrections[{a, b}] = RigidTransform::exp(xi);
    }
  }
  const LossEvaluation ev = evaluate_loss(st, w, sources, est, settings);
  REQUIRE(!ev.pose_gradient.empty());

  const DepthMap depth = st.depth(0);
  auto poses_for = [&](const std::map<PairKey, RigidTransform>& corr) {
    return poses_for_sources(est.with_corrections(corr), settings.policy, sources, 7);
  };
  std::map<SourceId, RigidTransform> frozen;
  for (const auto& [id, p] : poses_for(st.corrections)) frozen[id] = error_induced_pose(p, settings.error_alpha);
  const Reference base = reference_loss(depth, w, sources, poses_for(st.corrections), frozen, settings.loss);
  CHECK(base.error_won);
  CHECK(base.loss == doctest::Approx(ev.loss).epsilon(1e-12));

  const double h = 1e-6;
  double worst = 0.0;
  int checked = 0;
  for (const auto& [key, g] : ev.pose_gradient) {
    for (int c = 0; c < 6; ++c) {
      auto at = [&](double eps) {
        auto corr = st.corrections;
        Vector6d xi = Vector6d::Zero();
        xi(c) = eps;
        const auto it = corr.find(key);
        corr[key] = RigidTransform::exp(xi) * (it == corr.end() ? RigidTransform() : it->second);
        return reference_loss(depth, w, sources, poses_for(corr), frozen, settings.loss).loss;
      };
      const double numeric = (at(h) - at(-h)) / (2 * h);
      worst = std::max(worst, std::abs(numeric - g(c)) / std::max({std::abs(numeric), std::abs(g(c)), 1e-6}));
      ++checked;
    }
  }
  CHECK(checked >= 24);
  CHECK(worst < 1e-3);
}

TEST_CASE("run: warmup-only, logging and determinism") {
  SceneSpec s = small_scene();
  s.frames = 9;
  auto seq = scene(s);
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  RunConfig cfg;
  cfg.warmup_epochs = 2;
  cfg.boost_epochs = 0;
  cfg.iterations_per_epoch = 3;
  int callbacks = 0;
  const RunResult r = run(seq, est, cfg, LossConfig{}, nullptr, [&](int, int, const DepthMap&) { ++callbacks; });
  REQUIRE(r.log.size() == 2);
  for (const auto& row : r.log) CHECK(row.stage == Stage::warmup);
  CHECK(r.log.back().iteration == 6);
  CHECK(callbacks == 2);
  CHECK(r.depths.count(4) == 1);
  const std::string csv = log_to_csv(r.log);
  CHECK(csv.rfind("epoch,iteration,target,loss,lr,stage,sources\n", 0) == 0);

  cfg.boost_epochs = 2;
  cfg.targets = TargetSet::all;
  const RunResult a = run(seq, est, cfg, LossConfig{});
  cfg.threads = 3;
  const RunResult b = run(seq, est, cfg, LossConfig{});
  CHECK(log_to_csv(a.log) == log_to_csv(b.log));
  for (const auto& [t, d] : a.depths) CHECK(d.values == b.depths.at(t).values);
  CHECK(a.log.size() == 9 * 4);
  // Targets near the sequence ends lose sources and say so.
  CHECK(!a.warnings.empty());
}

TEST_CASE("run resumes from a given state") {
  SceneSpec s = small_scene();
  s.frames = 9;
  auto seq = scene(s);
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  RunConfig cfg;
  cfg.warmup_epochs = 2;
  cfg.boost_epochs = 0;
  cfg.iterations_per_epoch = 5;
  const RunResult warm = run(seq, est, cfg, LossConfig{});
  RunConfig boost = cfg;
  boost.warmup_epochs = 0;
  boost.boost_epochs = 1;
  const RunResult resumed = run(seq, est, boost, LossConfig{}, &warm.states);
  const RunResult cold = run(seq, est, boost, LossConfig{});
  CHECK(resumed.log.front().loss < cold.log.front().loss);
  std::map<int, OptimizerState> wrong;
  CHECK_THROWS_AS(run(seq, est, boost, LossConfig{}, &wrong), DataError);
}

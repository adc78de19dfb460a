#include "boostdepth/curriculum.hpp"

#include <cmath>
#include <cstdlib>

#include "boostdepth/error.hpp"

namespace boostdepth {

std::string SourceId::str() const {
  if (stereo) return "s";
  return (offset > 0 ? "+" : "") + std::to_string(offset);
}

double baseline(const BaselineModel& model, SourceId candidate) {
  if (candidate.stereo) return model.stereo_baseline;
  return model.b * std::abs(candidate.offset);
}

const char* to_string(Stage stage) { return stage == Stage::warmup ? "warmup" : "boost"; }

void CurriculumParams::validate() const {
  if (warmup_max_offset < 1 || boost_max_offset < 1 || tri_max_offset < 1) {
    throw ConfigError("curriculum: candidate offsets must be >= 1");
  }
}

CurriculumSchedule schedule_for_epoch(int epoch, Stage stage, bool tri_min, const CurriculumParams& p) {
  if (epoch < 0) throw ConfigError("schedule_for_epoch: epoch must be >= 0");
  CurriculumSchedule s;
  s.stage = stage;
  s.epoch = epoch;
  s.tri_min = tri_min;
  int max_offset = 0;
  if (stage == Stage::warmup) {
    s.tau = p.warmup_tau_intercept + p.warmup_tau_slope * epoch;
    max_offset = p.warmup_max_offset;
  } else if (tri_min) {
    s.tau = p.tri_tau_slope * epoch + p.tri_tau_intercept;
    max_offset = p.tri_max_offset;
  } else {
    s.tau = p.boost_tau_slope * epoch + p.boost_tau_intercept;
    max_offset = p.boost_max_offset;
  }
  if (p.use_stereo) s.omega.push_back(SourceId::stereo_partner());
  for (int k = 1; k <= max_offset; ++k) s.omega.push_back(SourceId::mono(k));
  return s;
}

namespace {

// True when candidate a should be preferred over b at equal baseline.
bool tie_preferred(SourceId a, SourceId b) {
  if (a.stereo != b.stereo) return !a.stereo;
  return a.offset > b.offset;
}

bool equal_within(double a, double b) { return std::abs(a - b) <= kBaselineTolerance; }

}  // namespace

SourceSelection select_source(const BaselineModel& model, const CurriculumSchedule& sched) {
  if (sched.omega.empty()) throw ConfigError("select_source: empty candidate set");
  const SourceId* best = nullptr;
  double best_g = 0.0;
  for (const auto& x : sched.omega) {
    const double g = baseline(model, x);
    if (g > sched.tau + kBaselineTolerance) continue;
    if (best == nullptr || (equal_within(g, best_g) ? tie_preferred(x, *best) : g > best_g)) {
      best = &x;
      best_g = g;
    }
  }
  if (best == nullptr) {
    for (const auto& x : sched.omega) {
      const double g = baseline(model, x);
      if (best == nullptr || (equal_within(g, best_g) ? tie_preferred(x, *best) : g < best_g)) {
        best = &x;
        best_g = g;
      }
    }
  }
  return {*best, {*best}};
}

namespace {

SourceSelection clip(SourceId chosen, const std::vector<SourceId>& wanted, const WindowExtent& extent,
                     std::vector<SourceId>* dropped) {
  SourceSelection out{chosen, {}};
  for (const auto& id : wanted) {
    if (extent.contains(id)) {
      out.sources.push_back(id);
    } else if (dropped != nullptr) {
      dropped->push_back(id);
    }
  }
  return out;
}

}  // namespace

SourceSelection expand_sources(const SourceSelection& selection, bool tri_min, const WindowExtent& extent,
                               std::vector<SourceId>* dropped) {
  const SourceId x = selection.chosen;
  const SourceId s = SourceId::stereo_partner();
  std::vector<SourceId> wanted;
  if (x.stereo) {
    wanted = {x};
  } else {
    const int k = std::abs(x.offset);
    const SourceId plus = SourceId::mono(k);
    const SourceId minus = SourceId::mono(-k);
    if (!tri_min) {
      wanted = {plus, minus};
    } else if (k == 1) {
      wanted = {plus, minus, s};
    } else if (k == 2) {
      wanted = {plus, SourceId::mono(k - 1), minus, SourceId::mono(-k + 1), s};
    } else {
      wanted = {plus,  SourceId::mono(k - 1),  SourceId::mono(k - 2),
                minus, SourceId::mono(-k + 1), SourceId::mono(-k + 2)};
    }
  }
  return clip(x, wanted, extent, dropped);
}

SourceSelection fixed_adjacent_sources(bool use_stereo, const WindowExtent& extent,
                                       std::vector<SourceId>* dropped) {
  std::vector<SourceId> wanted = {SourceId::mono(1), SourceId::mono(-1)};
  if (use_stereo) wanted.push_back(SourceId::stereo_partner());
  return clip(SourceId::mono(1), wanted, extent, dropped);
}

}  // namespace boostdepth

#pragma once

#include <compare>
#include <string>
#include <vector>

namespace boostdepth {

/// A candidate source frame relative to target t: either the stereo partner s
/// or the monocular frame t + offset.
struct SourceId {
  bool stereo = false;
  int offset = 0;

  static constexpr SourceId stereo_partner() { return {true, 0}; }
  static constexpr SourceId mono(int k) { return {false, k}; }

  bool is_mono() const { return !stereo; }
  /// "s", "+3", "-2".
  std::string str() const;

  friend auto operator<=>(const SourceId&, const SourceId&) = default;
};

/// Comparison slack for G(t, x) <= tau; absorbs rounding in the threshold formulas.
inline constexpr double kBaselineTolerance = 1e-9;

struct BaselineModel {
  double b = 0.0;                ///< per-frame baseline (distance units)
  double stereo_baseline = 0.1;  ///< G(t, s)
};

/// G(t, x): b*|k| for monocular t+k, stereo_baseline for s.
double baseline(const BaselineModel& model, SourceId candidate);

enum class Stage { warmup, boost };
const char* to_string(Stage stage);

/// Threshold and candidate-set formulas; the defaults are the published ones.
struct CurriculumParams {
  double warmup_tau_intercept = 0.1;
  double warmup_tau_slope = 0.04;
  int warmup_max_offset = 2;
  double boost_tau_intercept = -0.4;
  double boost_tau_slope = 0.1;
  int boost_max_offset = 5;
  double tri_tau_intercept = -0.9;
  double tri_tau_slope = 0.15;
  int tri_max_offset = 7;
  bool use_stereo = true;

  void validate() const;
};

struct CurriculumSchedule {
  Stage stage = Stage::warmup;
  int epoch = 0;
  std::vector<SourceId> omega;  ///< stereo first (if used), then t+1 .. t+max
  double tau = 0.0;
  bool tri_min = false;
};

/// tau and Omega for an absolute epoch. The boost formulas use the absolute
/// epoch count (10..19 in the published set-up).
CurriculumSchedule schedule_for_epoch(int epoch, Stage stage, bool tri_min,
                                      const CurriculumParams& params = {});

struct SourceSelection {
  SourceId chosen;
  std::vector<SourceId> sources;
};

/// argmax_{x in Omega} G(t,x) subject to G(t,x) <= tau. Ties prefer monocular
/// over stereo, then the larger offset. If nothing is feasible, the candidate
/// with the smallest G is returned (same tie order).
SourceSelection select_source(const BaselineModel& model, const CurriculumSchedule& sched);

/// Which neighbours of the target actually exist.
struct WindowExtent {
  int max_backward = 0;  ///< frames t-1 .. t-max_backward exist
  int max_forward = 0;   ///< frames t+1 .. t+max_forward exist
  bool has_stereo = true;

  bool contains(SourceId id) const {
    if (id.stereo) return has_stereo;
    return id.offset != 0 && id.offset <= max_forward && -id.offset <= max_backward;
  }
};

/// Full source set for a selection. Without tri-minimisation: {t+k, t-k} for a
/// monocular choice, {s} for stereo. With it, the four-case triplet rule. Indices
/// outside `extent` are dropped; `dropped` (optional) receives them.
SourceSelection expand_sources(const SourceSelection& selection, bool tri_min,
                               const WindowExtent& extent = {1 << 20, 1 << 20, true},
                               std::vector<SourceId>* dropped = nullptr);

/// Fixed one-frame set used when the curriculum is switched off: {t+1, t-1} and s.
SourceSelection fixed_adjacent_sources(bool use_stereo, const WindowExtent& extent,
                                       std::vector<SourceId>* dropped = nullptr);

}  // namespace boostdepth

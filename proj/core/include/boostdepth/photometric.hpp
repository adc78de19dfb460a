#pragma once

#include <span>
#include <vector>

#include "boostdepth/geometry.hpp"
#include "boostdepth/grid.hpp"

namespace boostdepth {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct LossConfig {
  double ssim_weight = 0.85;
  double smoothness_lambda = 0.001;
  bool automask_enabled = true;

  void validate() const;
};

/// Per-pixel non-negative error with a validity mask. Invalid pixels never
/// take part in reductions.
struct ErrorMap {
  Grid<double> values;
  Mask valid;
};

/// Local SSIM per channel, 3x3 box window over reflect-padded inputs.
Grid<double> ssim(const ImageBuffer& a, const ImageBuffer& b);

/// pe(a, b) = (w/2)(1 - SSIM) + (1 - w)|a - b|, evaluated per channel and
/// averaged. `valid_b` (optional) marks the pixels of b that exist; the result
/// is invalid wherever b is, and missing pixels take a's value inside the SSIM
/// windows of their neighbours.
ErrorMap photometric_error(const ImageBuffer& a, const ImageBuffer& b, const LossConfig& cfg,
                           const Mask* valid_b = nullptr);

/// Adjoint of photometric_error with respect to b: given dL/dpe per pixel,
/// returns dL/db per pixel and channel (zero at pixels `valid_b` marks missing).
/// Upstream entries at invalid pixels must be zero.
ImageBuffer photometric_error_backward(const ImageBuffer& a, const ImageBuffer& b,
                                       const Grid<double>& upstream, const LossConfig& cfg,
                                       const Mask* valid_b = nullptr);

struct Aggregate {
  ErrorMap error;
  Grid<int> winner;  ///< index of the minimising map, -1 where all are invalid
};

/// Per-pixel minimum over the valid entries of each map. Ties keep the lowest index.
Aggregate min_aggregate(std::span<const ErrorMap> errors);

/// mu = [min_j pe(target, recon_j) < min_i pe(target, source_i)]. All true when disabled.
Mask automask(const ImageBuffer& target, std::span<const ImageBuffer> sources,
              std::span<const Sampled> reconstructions, const LossConfig& cfg);
/// Same rule, from already-evaluated error maps.
Mask automask_from_errors(std::span<const ErrorMap> identity_errors,
                          std::span<const ErrorMap> reconstruction_errors, const LossConfig& cfg,
                          int width, int height);

/// Edge-aware first-order smoothness of mean-normalised inverse depth:
/// mean_x |dx d*| exp(-|dx I|) + mean_y |dy d*| exp(-|dy I|), d* = (1/D) / mean(1/D).
/// Only pairs of valid pixels contribute. Throws NumericError when no pixel is valid.
double smoothness_loss(const DepthMap& depth, const ImageBuffer& image);
/// d smoothness / d depth per pixel (zero at invalid pixels).
Grid<double> smoothness_backward(const DepthMap& depth, const ImageBuffer& image);

/// Mean over valid, mu-true pixels of the per-pixel error plus lambda * smoothness.
/// Throws NumericError when no pixel survives masking.
double total_loss(const ErrorMap& per_pixel, const Mask& mu, const DepthMap& depth,
                  const ImageBuffer& image, const LossConfig& cfg);

}  // namespace boostdepth

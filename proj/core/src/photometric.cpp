#include "boostdepth/photometric.hpp"

#include <cmath>
#include <limits>

#include "boostdepth/error.hpp"

namespace boostdepth {

void LossConfig::validate() const {
  if (!(ssim_weight >= 0.0 && ssim_weight <= 1.0)) throw ConfigError("loss.ssim_weight must be in [0,1]");
  if (!(smoothness_lambda >= 0.0)) throw ConfigError("loss.smoothness_lambda must be >= 0");
}

namespace {

inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// 3x3 mean over a reflect-padded plane.
void box3(const double* in, double* out, int w, int h) {
  for (int y = 0; y < h; ++y) {
    const double* r0 = in + static_cast<std::size_t>(reflect(y - 1, h)) * w;
    const double* r1 = in + static_cast<std::size_t>(y) * w;
    const double* r2 = in + static_cast<std::size_t>(reflect(y + 1, h)) * w;
    for (int x = 0; x < w; ++x) {
      const int xl = reflect(x - 1, w);
      const int xr = reflect(x + 1, w);
      out[static_cast<std::size_t>(y) * w + x] =
          (r0[xl] + r0[x] + r0[xr] + r1[xl] + r1[x] + r1[xr] + r2[xl] + r2[x] + r2[xr]) / 9.0;
    }
  }
}

// Transpose of box3.
void box3_adjoint(const double* g, double* out, int w, int h) {
  std::fill(out, out + static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    const int ys[3] = {reflect(y - 1, h), y, reflect(y + 1, h)};
    for (int x = 0; x < w; ++x) {
      const double v = g[static_cast<std::size_t>(y) * w + x] / 9.0;
      if (v == 0.0) continue;
      const int xs[3] = {reflect(x - 1, w), x, reflect(x + 1, w)};
      for (int yy : ys) {
        double* row = out + static_cast<std::size_t>(yy) * w;
        row[xs[0]] += v;
        row[xs[1]] += v;
        row[xs[2]] += v;
      }
    }
  }
}

// Window statistics of one channel pair.
struct SsimStats {
  std::vector<double> mu_a, mu_b, e_aa, e_bb, e_ab;
};

SsimStats channel_stats(const ImageBuffer& a, const ImageBuffer& b, int c) {
  const int w = a.width();
  const int h = a.height();
  const std::size_t n = a.pixel_count();
  const int ch = a.channels();
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double va = a[i * ch + c];
    const double vb = b[i * ch + c];
    pa[i] = va;
    pb[i] = vb;
    paa[i] = va * va;
    pbb[i] = vb * vb;
    pab[i] = va * vb;
  }
  SsimStats s;
  s.mu_a.resize(n);
  s.mu_b.resize(n);
  s.e_aa.resize(n);
  s.e_bb.resize(n);
  s.e_ab.resize(n);
  box3(pa.data(), s.mu_a.data(), w, h);
  box3(pb.data(), s.mu_b.data(), w, h);
  box3(paa.data(), s.e_aa.data(), w, h);
  box3(pbb.data(), s.e_bb.data(), w, h);
  box3(pab.data(), s.e_ab.data(), w, h);
  return s;
}

inline double ssim_value(const SsimStats& s, std::size_t i) {
  const double ma = s.mu_a[i];
  const double mb = s.mu_b[i];
  const double sa = s.e_aa[i] - ma * ma;
  const double sb = s.e_bb[i] - mb * mb;
  const double sab = s.e_ab[i] - ma * mb;
  const double num = (2.0 * ma * mb + kSsimC1) * (2.0 * sab + kSsimC2);
  const double den = (ma * ma + mb * mb + kSsimC1) * (sa + sb + kSsimC2);
  return num / den;
}

void check_pair(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (!a.same_shape(b)) throw DataError(std::string(what) + ": image shapes differ");
  if (a.width() < 2 || a.height() < 2) throw DataError(std::string(what) + ": images must be at least 2x2");
}

}  // namespace

Grid<double> ssim(const ImageBuffer& a, const ImageBuffer& b) {
  check_pair(a, b, "ssim");
  Grid<double> out(a.width(), a.height(), a.channels());
  const std::size_t n = a.pixel_count();
  for (int c = 0; c < a.channels(); ++c) {
    const SsimStats s = channel_stats(a, b, c);
    for (std::size_t i = 0; i < n; ++i) out[i * a.channels() + c] = ssim_value(s, i);
  }
  return out;
}

namespace {

// b with its missing pixels replaced by a, so they do not leak into neighbouring SSIM windows.
ImageBuffer fill_missing(const ImageBuffer& a, const ImageBuffer& b, const Mask& valid_b) {
  if (!valid_b.same_extent(a)) throw DataError("photometric_error: mask shape differs");
  ImageBuffer out = b;
  const int ch = a.channels();
  for (std::size_t i = 0; i < valid_b.size(); ++i) {
    if (valid_b[i]) continue;
    for (int c = 0; c < ch; ++c) out[i * ch + c] = a[i * ch + c];
  }
  return out;
}

}  // namespace

ErrorMap photometric_error(const ImageBuffer& a, const ImageBuffer& b_in, const LossConfig& cfg,
                           const Mask* valid_b) {
  check_pair(a, b_in, "photometric_error");
  const ImageBuffer b = valid_b != nullptr ? fill_missing(a, b_in, *valid_b) : b_in;
  const int ch = a.channels();
  const std::size_t n = a.pixel_count();
  const double w = cfg.ssim_weight;
  ErrorMap out{Grid<double>(a.width(), a.height(), 1, 0.0), Mask(a.width(), a.height(), 1, 1)};
  if (valid_b != nullptr) out.valid = *valid_b;
  for (int c = 0; c < ch; ++c) {
    const bool need_ssim = w != 0.0;
    SsimStats s;
    if (need_ssim) s = channel_stats(a, b, c);
    for (std::size_t i = 0; i < n; ++i) {
      const double l1 = std::abs(a[i * ch + c] - b[i * ch + c]);
      double v = (1.0 - w) * l1;
      if (need_ssim) v += 0.5 * w * (1.0 - ssim_value(s, i));
      out.values[i] += v / ch;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.valid[i]) out.values[i] = 0.0;
  }
  return out;
}

ImageBuffer photometric_error_backward(const ImageBuffer& a, const ImageBuffer& b_in,
                                       const Grid<double>& upstream, const LossConfig& cfg, const Mask* valid_b) {
  check_pair(a, b_in, "photometric_error_backward");
  const ImageBuffer b = valid_b != nullptr ? fill_missing(a, b_in, *valid_b) : b_in;
  if (!upstream.same_extent(a) || upstream.channels() != 1) {
    throw DataError("photometric_error_backward: upstream must be a single-channel map");
  }
  const int w_img = a.width();
  const int h_img = a.height();
  const int ch = a.channels();
  const std::size_t n = a.pixel_count();
  const double w = cfg.ssim_weight;
  ImageBuffer grad(w_img, h_img, ch, 0.0);
  std::vector<double> g_mu(n), g_bb(n), g_ab(n), t_mu(n), t_bb(n), t_ab(n);
  for (int c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double g = upstream[i];
      if (g == 0.0) continue;
      const double d = b[i * ch + c] - a[i * ch + c];
      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      grad[i * ch + c] += g * (1.0 - w) / ch * sgn;
    }
    if (w == 0.0) continue;
    const SsimStats s = channel_stats(a, b, c);
    const double dpe_dssim = -0.5 * w / ch;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = upstream[i] * dpe_dssim;
      if (g == 0.0) {
        g_mu[i] = g_bb[i] = g_ab[i] = 0.0;
        continue;
      }
      const double ma = s.mu_a[i];
      const double mb = s.mu_b[i];
      const double sa = s.e_aa[i] - ma * ma;
      const double sb = s.e_bb[i] - mb * mb;
      const double sab = s.e_ab[i] - ma * mb;
      const double p = 2.0 * ma * mb + kSsimC1;
      const double q = 2.0 * sab + kSsimC2;
      const double r = ma * ma + mb * mb + kSsimC1;
      const double t = sa + sb + kSsimC2;
      const double val = p * q / (r * t);
      // Partials with the window moments (mu_b, E[b^2], E[ab]) as independent inputs.
      g_mu[i] = g * val * (2.0 * ma / p - 2.0 * ma / q - 2.0 * mb / r + 2.0 * mb / t);
      g_bb[i] = g * val * (-1.0 / t);
      g_ab[i] = g * val * (2.0 / q);
    }
    box3_adjoint(g_mu.data(), t_mu.data(), w_img, h_img);
    box3_adjoint(g_bb.data(), t_bb.data(), w_img, h_img);
    box3_adjoint(g_ab.data(), t_ab.data(), w_img, h_img);
    for (std::size_t i = 0; i < n; ++i) {
      grad[i * ch + c] += t_mu[i] + 2.0 * b[i * ch + c] * t_bb[i] + a[i * ch + c] * t_ab[i];
    }
  }
  if (valid_b != nullptr) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!(*valid_b)[i]) {
        for (int c = 0; c < ch; ++c) grad[i * ch + c] = 0.0;
      }
    }
  }
  return grad;
}

Aggregate min_aggregate(std::span<const ErrorMap> errors) {
  if (errors.empty()) throw DataError("min_aggregate: no error maps");
  const int w = errors[0].values.width();
  const int h = errors[0].values.height();
  for (const auto& e : errors) {
    if (e.values.width() != w || e.values.height() != h || !e.valid.same_extent(e.values)) {
      throw DataError("min_aggregate: error maps differ in shape");
    }
  }
  Aggregate out{{Grid<double>(w, h, 1, 0.0), Mask(w, h, 1, 0)}, Grid<int>(w, h, 1, -1)};
  const std::size_t n = out.error.values.size();
  for (std::size_t j = 0; j < errors.size(); ++j) {
    const auto& e = errors[j];
    for (std::size_t i = 0; i < n; ++i) {
      if (!e.valid[i]) continue;
      if (!out.error.valid[i] || e.values[i] < out.error.values[i]) {
        out.error.values[i] = e.values[i];
        out.error.valid[i] = 1;
        out.winner[i] = static_cast<int>(j);
      }
    }
  }
  return out;
}

Mask automask_from_errors(std::span<const ErrorMap> identity_errors,
                          std::span<const ErrorMap> reconstruction_errors, const LossConfig& cfg,
                          int width, int height) {
  Mask mu(width, height, 1, 1);
  if (!cfg.automask_enabled) return mu;
  if (reconstruction_errors.empty()) {
    mu.fill(0);
    return mu;
  }
  const Aggregate recon = min_aggregate(reconstruction_errors);
  if (identity_errors.empty()) return mu;
  const Aggregate ident = min_aggregate(identity_errors);
  if (!recon.error.values.same_extent(mu)) throw DataError("automask: shape mismatch");
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!recon.error.valid[i]) {
      mu[i] = 0;
    } else if (!ident.error.valid[i]) {
      mu[i] = 1;
    } else {
      mu[i] = recon.error.values[i] < ident.error.values[i] ? 1 : 0;
    }
  }
  return mu;
}

Mask automask(const ImageBuffer& target, std::span<const ImageBuffer> sources,
              std::span<const Sampled> reconstructions, const LossConfig& cfg) {
  if (!cfg.automask_enabled) return Mask(target.width(), target.height(), 1, 1);
  std::vector<ErrorMap> ident;
  ident.reserve(sources.size());
  for (const auto& s : sources) ident.push_back(photometric_error(target, s, cfg));
  std::vector<ErrorMap> recon;
  recon.reserve(reconstructions.size());
  for (const auto& r : reconstructions) recon.push_back(photometric_error(target, r.image, cfg, &r.valid));
  return automask_from_errors(ident, recon, cfg, target.width(), target.height());
}

namespace {

struct SmoothTerms {
  std::vector<double> disp;
  double mean_disp = 0.0;
  std::size_t valid = 0;
  std::size_t pairs_x = 0;
  std::size_t pairs_y = 0;
};

SmoothTerms smooth_terms(const DepthMap& depth, const ImageBuffer& image) {
  if (depth.width() != image.width() || depth.height() != image.height()) {
    throw DataError("smoothness_loss: depth and image shapes differ");
  }
  SmoothTerms t;
  const std::size_t n = depth.values.size();
  t.disp.assign(n, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!depth.valid[i]) continue;
    t.disp[i] = 1.0 / depth.values[i];
    sum += t.disp[i];
    ++t.valid;
  }
  if (t.valid == 0 || !(sum > 0.0)) throw NumericError("smoothness_loss: no valid depth");
  t.mean_disp = sum / static_cast<double>(t.valid);
  const int w = depth.width();
  const int h = depth.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!depth.is_valid(x, y)) continue;
      if (x + 1 < w && depth.is_valid(x + 1, y)) ++t.pairs_x;
      if (y + 1 < h && depth.is_valid(x, y + 1)) ++t.pairs_y;
    }
  }
  return t;
}

inline double image_step(const ImageBuffer& image, int x0, int y0, int x1, int y1) {
  double s = 0.0;
  for (int c = 0; c < image.channels(); ++c) s += std::abs(image(x0, y0, c) - image(x1, y1, c));
  return s / image.channels();
}

}  // namespace

double smoothness_loss(const DepthMap& depth, const ImageBuffer& image) {
  const SmoothTerms t = smooth_terms(depth, image);
  const int w = depth.width();
  const int h = depth.height();
  double sx = 0.0;
  double sy = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!depth.is_valid(x, y)) continue;
      const std::size_t i = depth.values.index(x, y);
      const double ni = t.disp[i] / t.mean_disp;
      if (x + 1 < w && depth.is_valid(x + 1, y)) {
        const double nj = t.disp[i + 1] / t.mean_disp;
        sx += std::abs(ni - nj) * std::exp(-image_step(image, x, y, x + 1, y));
      }
      if (y + 1 < h && depth.is_valid(x, y + 1)) {
        const double nj = t.disp[i + w] / t.mean_disp;
        sy += std::abs(ni - nj) * std::exp(-image_step(image, x, y, x, y + 1));
      }
    }
  }
  double loss = 0.0;
  if (t.pairs_x > 0) loss += sx / static_cast<double>(t.pairs_x);
  if (t.pairs_y > 0) loss += sy / static_cast<double>(t.pairs_y);
  return loss;
}

Grid<double> smoothness_backward(const DepthMap& depth, const ImageBuffer& image) {
  const SmoothTerms t = smooth_terms(depth, image);
  const int w = depth.width();
  const int h = depth.height();
  std::vector<double> g_norm(t.disp.size(), 0.0);
  const double inv_x = t.pairs_x > 0 ? 1.0 / static_cast<double>(t.pairs_x) : 0.0;
  const double inv_y = t.pairs_y > 0 ? 1.0 / static_cast<double>(t.pairs_y) : 0.0;
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!depth.is_valid(x, y)) continue;
      const std::size_t i = depth.values.index(x, y);
      const double ni = t.disp[i] / t.mean_disp;
      if (x + 1 < w && depth.is_valid(x + 1, y)) {
        const double nj = t.disp[i + 1] / t.mean_disp;
        const double g = inv_x * std::exp(-image_step(image, x, y, x + 1, y)) * sign(ni - nj);
        g_norm[i] += g;
        g_norm[i + 1] -= g;
      }
      if (y + 1 < h && depth.is_valid(x, y + 1)) {
        const double nj = t.disp[i + w] / t.mean_disp;
        const double g = inv_y * std::exp(-image_step(image, x, y, x, y + 1)) * sign(ni - nj);
        g_norm[i] += g;
        g_norm[i + w] -= g;
      }
    }
  }
  // n_i = disp_i / m with m = mean(disp): dS/ddisp_q = G_q / m - sum_p G_p disp_p / (m^2 N).
  double coupling = 0.0;
  for (std::size_t i = 0; i < g_norm.size(); ++i) coupling += g_norm[i] * t.disp[i];
  coupling /= t.mean_disp * t.mean_disp * static_cast<double>(t.valid);
  Grid<double> grad(w, h, 1, 0.0);
  for (std::size_t i = 0; i < g_norm.size(); ++i) {
    if (!depth.valid[i]) continue;
    const double g_disp = g_norm[i] / t.mean_disp - coupling;
    grad[i] = g_disp * (-t.disp[i] * t.disp[i]);
  }
  return grad;
}

double total_loss(const ErrorMap& per_pixel, const Mask& mu, const DepthMap& depth,
                  const ImageBuffer& image, const LossConfig& cfg) {
  if (!per_pixel.values.same_extent(mu) || !per_pixel.values.same_extent(depth.values)) {
    throw DataError("total_loss: shapes differ");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!per_pixel.valid[i] || !mu[i]) continue;
    sum += per_pixel.values[i];
    ++count;
  }
  if (count == 0) throw NumericError("total_loss: no valid pixels after masking");
  double loss = sum / static_cast<double>(count);
  if (cfg.smoothness_lambda != 0.0) loss += cfg.smoothness_lambda * smoothness_loss(depth, image);
  return loss;
}

}  // namespace boostdepth

#include "boostdepth/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "json.hpp"

#include "boostdepth/error.hpp"

namespace boostdepth {

EdgeOrientation edge_orientation_from_string(const std::string& name) {
  if (name == "prose") return EdgeOrientation::prose;
  if (name == "literal") return EdgeOrientation::literal;
  throw ConfigError("unknown edge orientation '" + name + "' (expected prose or literal)");
}

const char* to_string(EdgeOrientation o) { return o == EdgeOrientation::prose ? "prose" : "literal"; }

void MetricOptions::validate() const {
  if (!(min_depth > 0.0 && min_depth < max_depth)) throw ConfigError("metrics: need 0 < min_depth < max_depth");
  if (!(edge_low > 0.0 && edge_low <= edge_high)) throw ConfigError("metrics: need 0 < edge_low <= edge_high");
  if (!(edge_cap > 0.0)) throw ConfigError("metrics.edge_cap must be > 0");
  if (!(pointcloud_delta > 0.0)) throw ConfigError("metrics.pointcloud_delta must be > 0");
}

namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

ImageMetrics image_metrics(const DepthMap& pred, const DepthMap& gt, bool median_scaling, double min_depth,
                           double max_depth) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw DataError("image_metrics: prediction and ground truth differ in shape");
  }
  std::vector<double> p;
  std::vector<double> g;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (!gt.valid[i] || !pred.valid[i]) continue;
    p.push_back(pred.values[i]);
    g.push_back(gt.values[i]);
  }
  if (p.empty()) throw DataError("image_metrics: no valid pixels");
  ImageMetrics m;
  if (median_scaling) {
    m.scale = median(g) / median(p);
    for (double& v : p) v *= m.scale;
  }
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::clamp(g[i], min_depth, max_depth);
    const double e = std::clamp(p[i], min_depth, max_depth);
    const double diff = std::abs(e - d);
    m.abs_rel += diff / d;
    m.sq_rel += diff * diff / d;
    m.rmse += diff * diff;
    const double dl = std::log(e) - std::log(d);
    m.rmse_log += dl * dl;
    const double ratio = std::max(e / d, d / e);
    m.delta1 += ratio < 1.25 ? 1.0 : 0.0;
    m.delta2 += ratio < 1.25 * 1.25 ? 1.0 : 0.0;
    m.delta3 += ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
  }
  const double inv = 1.0 / static_cast<double>(n);
  m.abs_rel *= inv;
  m.sq_rel *= inv;
  m.rmse = std::sqrt(m.rmse * inv);
  m.rmse_log = std::sqrt(m.rmse_log * inv);
  m.delta1 *= inv;
  m.delta2 *= inv;
  m.delta3 *= inv;
  m.count = n;
  return m;
}

EdgeMap extract_edges(const DepthMap& depth, double low, double high) {
  if (!(low > 0.0 && low <= high)) throw ConfigError("extract_edges: need 0 < low <= high");
  const int w = depth.width();
  const int h = depth.height();
  Grid<double> logd(w, h, 1, 0.0);
  for (std::size_t i = 0; i < logd.size(); ++i) {
    if (depth.valid[i]) logd[i] = std::log(depth.values[i]);
  }
  auto at = [&](int x, int y, int cx, int cy) {
    // Neighbour value, falling back to the centre outside the image or at invalid pixels.
    if (x < 0 || y < 0 || x >= w || y >= h || !depth.is_valid(x, y)) return logd(cx, cy);
    return logd(x, y);
  };
  Grid<double> mag(w, h, 1, 0.0);
  Grid<int> dir(w, h, 1, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!depth.is_valid(x, y)) continue;
      // Forward differences put a one-pixel depth step on a single pixel; central
      // differences would split it evenly between two and leave NMS to pick a side.
      const double gx = at(x + 1, y, x, y) - logd(x, y);
      const double gy = at(x, y + 1, x, y) - logd(x, y);
      mag(x, y) = std::hypot(gx, gy);
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      int bin = 0;
      if (angle >= 22.5 && angle < 67.5) {
        bin = 1;
      } else if (angle >= 67.5 && angle < 112.5) {
        bin = 2;
      } else if (angle >= 112.5 && angle < 157.5) {
        bin = 3;
      }
      dir(x, y) = bin;
    }
  }
  static constexpr std::array<std::array<int, 2>, 4> kStep = {{{1, 0}, {1, 1}, {0, 1}, {-1, 1}}};
  auto mag_at = [&](int x, int y) { return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : mag(x, y); };
  Mask candidate(w, h, 1, 0);
  EdgeMap edges(w, h, 1, 0);
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = mag(x, y);
      if (m < low) continue;
      const auto [dx, dy] = kStep[static_cast<std::size_t>(dir(x, y))];
      // Plateaus of equal magnitude keep only their last pixel along the gradient.
      if (!(m >= mag_at(x - dx, y - dy) && m > mag_at(x + dx, y + dy))) continue;
      candidate(x, y) = 1;
      if (m >= high) {
        edges(x, y) = 1;
        stack.emplace_back(x, y);
      }
    }
  }
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (!edges.in_bounds(nx, ny) || !candidate(nx, ny) || edges(nx, ny)) continue;
        edges(nx, ny) = 1;
        stack.emplace_back(nx, ny);
      }
    }
  }
  return edges;
}

namespace {

// Squared-distance lower envelope of parabolas (Felzenszwalb & Huttenlocher), in place.
void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[static_cast<std::size_t>(q)] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    auto intersect = [&](int p) {
      const auto fq = f[static_cast<std::size_t>(q)];
      const auto fp = f[static_cast<std::size_t>(p)];
      return ((fq + static_cast<double>(q) * q) - (fp + static_cast<double>(p) * p)) / (2.0 * (q - p));
    };
    double s = intersect(v[static_cast<std::size_t>(k)]);
    while (s <= z[static_cast<std::size_t>(k)]) {
      --k;
      s = intersect(v[static_cast<std::size_t>(k)]);
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = k == 0 ? -kInf : s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    d[static_cast<std::size_t>(q)] = static_cast<double>(q - p) * (q - p) + f[static_cast<std::size_t>(p)];
  }
}

}  // namespace

Grid<double> distance_transform(const Mask& set) {
  const int w = set.width();
  const int h = set.height();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Grid<double> sq(w, h, 1, kInf);
  for (std::size_t i = 0; i < sq.size(); ++i) {
    if (set[i]) sq[i] = 0.0;
  }
  const int n = std::max(w, h);
  std::vector<double> f, d;
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = sq(x, y);
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) sq(x, y) = d[static_cast<std::size_t>(y)];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = sq(x, y);
    edt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) sq(x, y) = std::sqrt(d[static_cast<std::size_t>(x)]);
  }
  return sq;
}

namespace {

// Mean of min(distance, cap) over the pixels of `over`; cap when `over` is empty.
double capped_mean(const Mask& over, const Grid<double>& dist, double cap, bool& degenerate) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < over.size(); ++i) {
    if (!over[i]) continue;
    sum += std::min(dist[i], cap);
    ++n;
  }
  degenerate = n == 0;
  return degenerate ? cap : sum / static_cast<double>(n);
}

}  // namespace

EdgeScores edge_metrics(const EdgeMap& pred, const EdgeMap& gt, double cap, EdgeOrientation orientation) {
  if (!pred.same_extent(gt)) throw DataError("edge_metrics: edge maps differ in shape");
  const Grid<double> to_gt = distance_transform(gt);
  const Grid<double> to_pred = distance_transform(pred);
  EdgeScores s;
  if (orientation == EdgeOrientation::prose) {
    s.acc = capped_mean(pred, to_gt, cap, s.acc_degenerate);
    s.comp = capped_mean(gt, to_pred, cap, s.comp_degenerate);
  } else {
    s.acc = capped_mean(gt, to_pred, cap, s.acc_degenerate);
    s.comp = capped_mean(pred, to_gt, cap, s.comp_degenerate);
  }
  return s;
}

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

class PointGrid {
 public:
  PointGrid(const std::vector<Eigen::Vector3d>& points, double cell) : points_(points), cell_(cell) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const CellKey k = key(points[i]);
      cells_[k].push_back(static_cast<std::uint32_t>(i));
      if (i == 0) {
        lo_ = hi_ = k;
      } else {
        lo_ = {std::min(lo_.x, k.x), std::min(lo_.y, k.y), std::min(lo_.z, k.z)};
        hi_ = {std::max(hi_.x, k.x), std::max(hi_.y, k.y), std::max(hi_.z, k.z)};
      }
    }
  }

  double nearest(const Eigen::Vector3d& q) const {
    const CellKey c = key(q);
    double best = std::numeric_limits<double>::infinity();
    const std::int64_t max_r = std::max({c.x - lo_.x, hi_.x - c.x, c.y - lo_.y, hi_.y - c.y, c.z - lo_.z,
                                         hi_.z - c.z, std::int64_t{0}});
    for (std::int64_t r = 0; r <= max_r; ++r) {
      scan_ring(c, r, q, best);
      // Anything outside the ring-r cube is farther than r cells along some axis.
      if (best <= static_cast<double>(r) * cell_) break;
    }
    return best;
  }

 private:
  CellKey key(const Eigen::Vector3d& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }

  void visit(const CellKey& k, const Eigen::Vector3d& q, double& best) const {
    const auto it = cells_.find(k);
    if (it == cells_.end()) return;
    for (std::uint32_t i : it->second) best = std::min(best, (points_[i] - q).norm());
  }

  void scan_ring(const CellKey& c, std::int64_t r, const Eigen::Vector3d& q, double& best) const {
    const std::int64_t x0 = std::max(c.x - r, lo_.x), x1 = std::min(c.x + r, hi_.x);
    const std::int64_t y0 = std::max(c.y - r, lo_.y), y1 = std::min(c.y + r, hi_.y);
    const std::int64_t z0 = std::max(c.z - r, lo_.z), z1 = std::min(c.z + r, hi_.z);
    for (std::int64_t x = x0; x <= x1; ++x) {
      const bool x_edge = std::abs(x - c.x) == r;
      for (std::int64_t y = y0; y <= y1; ++y) {
        const bool xy_edge = x_edge || std::abs(y - c.y) == r;
        if (xy_edge) {
          for (std::int64_t z = z0; z <= z1; ++z) visit({x, y, z}, q, best);
        } else {
          if (c.z - r >= z0) visit({x, y, c.z - r}, q, best);
          if (r > 0 && c.z + r <= z1) visit({x, y, c.z + r}, q, best);
        }
      }
    }
  }

  const std::vector<Eigen::Vector3d>& points_;
  double cell_;
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> cells_;
  CellKey lo_{0, 0, 0};
  CellKey hi_{0, 0, 0};
};

}  // namespace

std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& queries,
                                      const std::vector<Eigen::Vector3d>& reference, double cell) {
  if (reference.empty()) throw DataError("nearest_distances: empty reference cloud");
  if (!(cell > 0.0)) throw ConfigError("nearest_distances: cell size must be > 0");
  const PointGrid grid(reference, cell);
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(grid.nearest(q));
  return out;
}

PointCloudScores pointcloud_metrics(const std::vector<Eigen::Vector3d>& pred,
                                    const std::vector<Eigen::Vector3d>& gt, double delta) {
  if (pred.empty() || gt.empty()) throw DataError("pointcloud_metrics: empty point cloud");
  if (!(delta > 0.0)) throw ConfigError("pointcloud_metrics: delta must be > 0");
  const std::vector<double> pred_to_gt = nearest_distances(pred, gt, delta);
  const std::vector<double> gt_to_pred = nearest_distances(gt, pred, delta);
  PointCloudScores s;
  double a = 0.0;
  double b = 0.0;
  std::size_t within_p = 0;
  std::size_t within_r = 0;
  for (double d : pred_to_gt) {
    a += d;
    within_p += d < delta;
  }
  for (double d : gt_to_pred) {
    b += d;
    within_r += d < delta;
  }
  s.chamfer = b / static_cast<double>(gt.size()) + a / static_cast<double>(pred.size());
  s.precision = static_cast<double>(within_p) / static_cast<double>(pred.size());
  s.recall = static_cast<double>(within_r) / static_cast<double>(gt.size());
  const double pr = s.precision * s.recall;
  const double sum = s.precision + s.recall;
  s.f_score = sum > 0.0 ? 2.0 * pr / sum : 0.0;
  s.iou = sum > 0.0 ? pr / (sum - pr) : 0.0;
  return s;
}

MetricReport evaluate_depth(const DepthMap& pred, const DepthMap& gt, const Intrinsics& k,
                            const MetricOptions& options, const std::string& name) {
  options.validate();
  MetricReport r;
  r.name = name;
  const ImageMetrics im = image_metrics(pred, gt, options.median_scaling, options.min_depth, options.max_depth);
  r.abs_rel = im.abs_rel;
  r.sq_rel = im.sq_rel;
  r.rmse = im.rmse;
  r.rmse_log = im.rmse_log;
  r.delta1 = im.delta1;
  r.delta2 = im.delta2;
  r.delta3 = im.delta3;

  // Clamped (and optionally scaled) copies feed the edge and point-cloud metrics.
  auto prepared = [&](const DepthMap& d, double scale) {
    DepthMap out = d;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      if (!gt.valid[i] || !pred.valid[i]) {
        out.valid[i] = 0;
        continue;
      }
      out.values[i] = std::clamp(out.values[i] * scale, options.min_depth, options.max_depth);
    }
    return out;
  };
  const DepthMap p = prepared(pred, im.scale);
  const DepthMap g = prepared(gt, 1.0);
  const EdgeScores es = edge_metrics(extract_edges(p, options.edge_low, options.edge_high),
                                     extract_edges(g, options.edge_low, options.edge_high), options.edge_cap,
                                     options.edge_orientation);
  r.edge_acc = es.acc;
  r.edge_comp = es.comp;
  r.edge_flagged = es.acc_degenerate || es.comp_degenerate;
  const PointCloudScores pc = pointcloud_metrics(backproject(p, k), backproject(g, k), options.pointcloud_delta);
  r.chamfer = pc.chamfer;
  r.precision = pc.precision;
  r.recall = pc.recall;
  r.f_score = pc.f_score;
  r.iou = pc.iou;
  return r;
}

MetricReport aggregate_reports(const std::vector<MetricReport>& reports) {
  MetricReport m;
  m.name = "mean";
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.abs_rel += r.abs_rel;
    m.sq_rel += r.sq_rel;
    m.rmse += r.rmse;
    m.rmse_log += r.rmse_log;
    m.delta1 += r.delta1;
    m.delta2 += r.delta2;
    m.delta3 += r.delta3;
    m.edge_acc += r.edge_acc;
    m.edge_comp += r.edge_comp;
    m.edge_flagged = m.edge_flagged || r.edge_flagged;
    m.chamfer += r.chamfer;
    m.precision += r.precision;
    m.recall += r.recall;
    m.f_score += r.f_score;
    m.iou += r.iou;
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  for (double* v : {&m.abs_rel, &m.sq_rel, &m.rmse, &m.rmse_log, &m.delta1, &m.delta2, &m.delta3, &m.edge_acc,
                    &m.edge_comp, &m.chamfer, &m.precision, &m.recall, &m.f_score, &m.iou}) {
    *v *= inv;
  }
  return m;
}

namespace {

nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["abs_rel"] = r.abs_rel;
  j["sq_rel"] = r.sq_rel;
  j["rmse"] = r.rmse;
  j["rmse_log"] = r.rmse_log;
  j["delta1"] = r.delta1;
  j["delta2"] = r.delta2;
  j["delta3"] = r.delta3;
  j["edge_acc"] = r.edge_acc;
  j["edge_comp"] = r.edge_comp;
  j["edge_flagged"] = r.edge_flagged;
  j["chamfer"] = r.chamfer;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f_score"] = r.f_score;
  j["iou"] = r.iou;
  return j;
}

}  // namespace

std::string reports_to_json(const std::vector<MetricReport>& per_image, const MetricReport& aggregate) {
  nlohmann::ordered_json j;
  j["images"] = nlohmann::ordered_json::array();
  for (const auto& r : per_image) j["images"].push_back(to_json(r));
  j["aggregate"] = to_json(aggregate);
  return j.dump(2) + "\n";
}

std::string reports_to_csv(const std::vector<MetricReport>& per_image, const MetricReport& aggregate) {
  std::string out =
      "name,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,edge_acc,edge_comp,edge_flagged,chamfer,precision,"
      "recall,f_score,iou\n";
  char buf[640];
  auto row = [&](const MetricReport& r) {
    std::snprintf(buf, sizeof(buf),
                  "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.name.c_str(), r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.delta1, r.delta2, r.delta3,
                  r.edge_acc, r.edge_comp, r.edge_flagged ? 1 : 0, r.chamfer, r.precision, r.recall, r.f_score,
                  r.iou);
    out += buf;
  };
  for (const auto& r : per_image) row(r);
  row(aggregate);
  return out;
}

}  // namespace boostdepth

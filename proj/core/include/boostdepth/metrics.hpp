#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "boostdepth/geometry.hpp"
#include "boostdepth/grid.hpp"

namespace boostdepth {

/// Binary map of depth-boundary pixels.
using EdgeMap = Mask;

/// Which set each edge mean runs over. `prose`: Acc averages over predicted edges
/// (distance to the nearest ground-truth edge) and Comp over ground-truth edges.
/// `literal`: the two sets are swapped.
enum class EdgeOrientation { prose, literal };
EdgeOrientation edge_orientation_from_string(const std::string& name);
const char* to_string(EdgeOrientation o);

struct MetricOptions {
  bool median_scaling = false;
  double min_depth = 1e-3;
  double max_depth = 100.0;
  double edge_low = 0.05;
  double edge_high = 0.15;
  double edge_cap = 10.0;
  EdgeOrientation edge_orientation = EdgeOrientation::prose;
  double pointcloud_delta = 0.1;

  void validate() const;
};

struct ImageMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double scale = 1.0;  ///< factor applied to the prediction (median scaling)
  std::size_t count = 0;
};

/// AbsRel, SqRel, RMSE, RMSE log and the 1.25^k threshold accuracies over pixels
/// where both maps are valid. Both depths are clamped to [min_depth, max_depth]
/// after optional median scaling. Throws DataError on shape mismatch or when no
/// pixel is valid.
ImageMetrics image_metrics(const DepthMap& pred, const DepthMap& gt, bool median_scaling,
                           double min_depth = 1e-3, double max_depth = 100.0);

/// Canny-style boundaries of log-depth: forward-difference gradient magnitude,
/// non-maximum suppression along the quantised gradient direction, hysteresis
/// between `low` and `high` (8-connected).
EdgeMap extract_edges(const DepthMap& depth, double low, double high);

/// Exact Euclidean distance from every pixel to the nearest set pixel
/// (+inf everywhere when the set is empty).
Grid<double> distance_transform(const Mask& set);

struct EdgeScores {
  double acc = 0.0;
  double comp = 0.0;
  bool acc_degenerate = false;   ///< the set Acc averages over was empty; acc = cap
  bool comp_degenerate = false;  ///< same for Comp
};

EdgeScores edge_metrics(const EdgeMap& pred, const EdgeMap& gt, double cap = 10.0,
                        EdgeOrientation orientation = EdgeOrientation::prose);

struct PointCloudScores {
  double chamfer = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  double iou = 0.0;
};

/// Nearest-neighbour distance from each query to `reference`, accelerated by a
/// uniform hash grid with the given cell size. Exactly equal to brute force.
std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& queries,
                                      const std::vector<Eigen::Vector3d>& reference, double cell);

/// Symmetric Chamfer (sum of both directed means), precision/recall at `delta`,
/// F = 2PR/(P+R), IoU = PR/(P+R-PR). Throws DataError for empty clouds.
PointCloudScores pointcloud_metrics(const std::vector<Eigen::Vector3d>& pred,
                                    const std::vector<Eigen::Vector3d>& gt, double delta = 0.1);

struct MetricReport {
  std::string name;
  double abs_rel = 0.0, sq_rel = 0.0, rmse = 0.0, rmse_log = 0.0;
  double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
  double edge_acc = 0.0, edge_comp = 0.0;
  bool edge_flagged = false;
  double chamfer = 0.0, precision = 0.0, recall = 0.0, f_score = 0.0, iou = 0.0;
};

/// Full battery for one prediction. Point clouds are back-projected in the camera frame.
MetricReport evaluate_depth(const DepthMap& pred, const DepthMap& gt, const Intrinsics& k,
                            const MetricOptions& options, const std::string& name = {});
/// Field-wise mean (edge_flagged is true if any input was flagged).
MetricReport aggregate_reports(const std::vector<MetricReport>& reports);

std::string reports_to_json(const std::vector<MetricReport>& per_image, const MetricReport& aggregate);
std::string reports_to_csv(const std::vector<MetricReport>& per_image, const MetricReport& aggregate);

}  // namespace boostdepth

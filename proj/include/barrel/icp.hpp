#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "barrel/barrelnet.hpp"
#include "barrel/camera.hpp"
#include "barrel/geom.hpp"
#include "barrel/kdtree.hpp"
#include "barrel/synthgen.hpp"

namespace barrel {

struct IcpConfig {
  std::size_t max_iterations = 100;
  double convergence_tol = 1e-4;
  std::size_t n_starts = 9;
  double init_sphere_radius = 0.5;
  /// Re-synthesis rounds per start: the predicted cloud is re-rendered at the
  /// latest centroid so floor clipping and occlusion follow the estimate.
  std::size_t resynthesis_rounds = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IcpResult {
  Vec3 translation = Vec3::Zero();
  double final_cost = 0.0;
  std::size_t iterations_used = 0;
  std::size_t start_index = 0;
  std::vector<double> cost_history;  // cost at the start of each iteration, then the final cost
};

/// Rotation-fixed ICP: source + t is matched to its nearest target points and
/// t moves by the mean residual until the step is <= convergence_tol.
IcpResult icp_translation(const PointCloud& source, const KdTree& target, const Vec3& init, const IcpConfig& cfg);
IcpResult icp_translation(const PointCloud& source, const PointCloud& target, const Vec3& init, const IcpConfig& cfg);

/// Predicted barrel surface relative to `centroid`: floor clipped and, when
/// cameras are given, reduced to what those cameras see. Points are returned
/// with the centroid subtracted.
PointCloud synthesize_predicted_cloud(const Prediction& pred, const Vec3& centroid, std::span<const CameraView> cams,
                                      const RenderOptions& opts = {});

struct CentroidEstimate {
  Vec3 centroid = Vec3::Zero();
  IcpResult icp;
  std::vector<IcpResult> starts;  // one per start, in start order
};

/// Multi-start centroid search; starts are uniform in a ball around the
/// observed mean. The lowest final cost wins, ties to the lower start index.
/// Throws AllStartsFailed when no start produces a result.
CentroidEstimate estimate_centroid(const Prediction& pred, const PointCloud& observed, std::span<const CameraView> cams,
                                   const IcpConfig& cfg);

}  // namespace barrel

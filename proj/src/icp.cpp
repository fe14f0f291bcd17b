#include "barrel/icp.hpp"

#include <limits>

#include "barrel/error.hpp"
#include "barrel/rng.hpp"

namespace barrel {

void IcpConfig::validate() const {
  if (max_iterations < 1 || !(convergence_tol > 0.0) || n_starts < 1 || !(init_sphere_radius >= 0.0) ||
      resynthesis_rounds < 1)
    throw Error(ErrorCode::kInvalidArgument, "invalid ICP configuration");
}

namespace {

/// Mean squared distance and mean displacement to the nearest target points.
std::pair<double, Vec3> correspond(const PointCloud& source, const KdTree& target, const Vec3& t) {
  double cost = 0.0;
  Vec3 shift = Vec3::Zero();
  for (Eigen::Index i = 0; i < source.rows(); ++i) {
    const Vec3 p = source.row(i).transpose() + t;
    const Neighbor nb = target.nearest(p);
    shift += target.points().row(nb.index).transpose() - p;
    cost += nb.distance * nb.distance;
  }
  const double n = static_cast<double>(source.rows());
  return {cost / n, shift / n};
}

}  // namespace

IcpResult icp_translation(const PointCloud& source, const KdTree& target, const Vec3& init, const IcpConfig& cfg) {
  cfg.validate();
  if (source.rows() == 0) throw Error(ErrorCode::kEmptyCloud, "ICP source is empty");
  IcpResult r;
  r.translation = init;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const auto [cost, step] = correspond(source, target, r.translation);
    r.cost_history.push_back(cost);
    r.translation += step;
    r.iterations_used = it + 1;
    if (step.norm() <= cfg.convergence_tol) break;
  }
  r.final_cost = correspond(source, target, r.translation).first;
  r.cost_history.push_back(r.final_cost);
  return r;
}

IcpResult icp_translation(const PointCloud& source, const PointCloud& target, const Vec3& init, const IcpConfig& cfg) {
  if (target.rows() == 0) throw Error(ErrorCode::kEmptyCloud, "ICP target is empty");
  return icp_translation(source, KdTree(target), init, cfg);
}

PointCloud synthesize_predicted_cloud(const Prediction& pred, const Vec3& centroid, std::span<const CameraView> cams,
                                      const RenderOptions& opts) {
  const CylinderPose cyl{pred.axis, centroid, pred.radius, 1.0};
  const SurfaceSample surface = sample_cylinder_surface_with_normals(cyl, opts.n_side, opts.n_cap, opts.seed);
  PointCloud out;
  if (cams.empty()) {
    std::vector<std::size_t> keep;
    for (Eigen::Index i = 0; i < surface.points.rows(); ++i)
      if (surface.points(i, 2) >= 0.0) keep.push_back(static_cast<std::size_t>(i));
    if (keep.empty()) throw Error(ErrorCode::kEmptyRender, "predicted cylinder is fully buried");
    out = select_rows(surface.points, keep);
  } else {
    std::vector<PointCloud> parts;
    Eigen::Index total = 0;
    for (const CameraView& cam : cams) {
      try {
        parts.push_back(render_sample(surface, cam, opts).points);
        total += parts.back().rows();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptyRender) throw;
      }
    }
    if (total == 0) throw Error(ErrorCode::kEmptyRender, "predicted cylinder is invisible from every camera");
    out.resize(total, 3);
    Eigen::Index row = 0;
    for (const auto& part : parts) {
      out.middleRows(row, part.rows()) = part;
      row += part.rows();
    }
  }
  out.rowwise() -= centroid.transpose();
  return out;
}

CentroidEstimate estimate_centroid(const Prediction& pred, const PointCloud& observed, std::span<const CameraView> cams,
                                   const IcpConfig& cfg) {
  cfg.validate();
  if (observed.rows() == 0) throw Error(ErrorCode::kEmptyCloud, "observed cloud is empty");
  const KdTree target(observed);
  const Vec3 mean = cloud_mean(observed);

  CentroidEstimate est;
  std::optional<std::size_t> best;
  for (std::size_t s = 0; s < cfg.n_starts; ++s) {
    Rng rng(derive_seed(cfg.seed, {s}));
    Vec3 centroid = mean + rng.in_ball(cfg.init_sphere_radius);
    IcpResult result;
    bool ok = false;
    try {
      for (std::size_t round = 0; round < cfg.resynthesis_rounds; ++round) {
        const PointCloud source = synthesize_predicted_cloud(pred, centroid, cams);
        result = icp_translation(source, target, centroid, cfg);
        const double moved = (result.translation - centroid).norm();
        centroid = result.translation;
        ok = true;
        if (moved <= cfg.convergence_tol) break;
      }
    } catch (const Error&) {
      // A start whose re-synthesis fails keeps its last good result, if any.
    }
    result.start_index = s;
    if (!ok) {
      result.final_cost = std::numeric_limits<double>::infinity();
      est.starts.push_back(result);
      continue;
    }
    est.starts.push_back(result);
    if (!best || result.final_cost < est.starts[*best].final_cost) best = s;
  }
  if (!best) throw Error(ErrorCode::kAllStartsFailed, "no ICP start produced a result");
  est.icp = est.starts[*best];
  est.centroid = est.icp.translation;
  return est;
}

}  // namespace barrel

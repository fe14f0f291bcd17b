#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "barrel/camera.hpp"
#include "barrel/geom.hpp"
#include "barrel/rng.hpp"

namespace barrel {

struct Range {
  double lo;
  double hi;
};

struct GenConfig {
  std::size_t n_cylinders = 100;
  std::size_t views_per_cylinder = 20;
  Range radius_range{0.2, 0.5};
  Range burial_range{0.05, 0.85};
  double axis_min_z = 0.0;
  Range camera_distance_range{2.0, 5.0};
  Range camera_elevation_deg{20.0, 80.0};
  int render_resolution = 128;
  double fov_deg = 50.0;
  /// Centroid x and y are drawn uniformly from [-c, c].
  double centroid_xy_extent = 0.5;
  std::size_t points_per_cloud_min = 64;
  /// Isotropic Gaussian jitter applied to visible points (0 = exact surface).
  double jitter_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument on empty ranges or out-of-domain values.
  void validate() const;
};

struct LabeledSample {
  PointCloud cloud;
  CylinderPose truth;
  double burial_truth = 0.0;
  std::size_t cyl_id = 0;
  std::size_t view_id = 0;
  CameraView camera;
  /// Seed of the stream that produced this (cylinder, view) pair.
  std::uint64_t sample_seed = 0;
  std::size_t attempt = 0;
};

/// Axis uniform on the cap n_z >= axis_min_z, radius uniform, and centroid
/// height solved by bisection so the burial fraction matches a uniform draw.
CylinderPose sample_pose(Rng& rng, const GenConfig& cfg);

/// Bisection on centroid height for a fixed axis, radius and xy. Throws
/// BisectionFailure if |achieved - target| > tol after max_iterations.
CylinderPose place_at_burial(const UnitAxis& axis, double radius, double cx, double cy, double target,
                             double tol = 0.005, int max_iterations = 60);

/// Seed of the Monte Carlo stream used for placement and for ground truth.
inline constexpr std::uint64_t kPlacementSeed = 0x6275726961ULL;

CameraView sample_camera(Rng& rng, const GenConfig& cfg, const Vec3& target);

/// Focal length (pixels) for a horizontal field of view.
double focal_from_fov(int width, double fov_deg);

struct RenderOptions {
  std::size_t n_side = 20000;
  std::size_t n_cap = 4000;
  bool backface_cull = true;
  bool zbuffer = true;
  std::uint64_t seed = 0x72656e646572ULL;
};

struct Rendered {
  PointCloud points;
  std::vector<int> pixels;  // pixel index of each point
  std::vector<double> depths;
};

/// Points of the floor-clipped cylinder surface a camera sees, one per pixel
/// (nearest depth wins, ties to the lower sample index), in world coordinates
/// ordered by pixel index. Throws EmptyRender when nothing survives.
Rendered render_visible(const CylinderPose& cyl, const CameraView& cam, const RenderOptions& opts = {});
PointCloud render_visible_points(const CylinderPose& cyl, const CameraView& cam,
                                 const RenderOptions& opts = {});

/// Same pipeline applied to an arbitrary oriented sample (points + outward normals).
Rendered render_sample(const SurfaceSample& surface, const CameraView& cam, const RenderOptions& opts);

/// Row indices of the nearest point of an existing cloud in each pixel, in
/// pixel order. Ties keep the lower row.
std::vector<std::size_t> zbuffer_visible(const PointCloud& pc, const CameraView& cam);

struct GenStats {
  std::size_t n_samples = 0;
  std::size_t n_redraws = 0;
  std::size_t n_skipped = 0;
};

/// Streams samples in (cyl_id, view_id) order. Each (cylinder, view) pair
/// draws from its own seed stream, so output does not depend on evaluation order.
GenStats generate_dataset(const GenConfig& cfg, const std::function<void(LabeledSample&&)>& sink);
std::vector<LabeledSample> generate_dataset(const GenConfig& cfg, GenStats* stats = nullptr);

/// Exact per-pixel ray cast of the floor plane z = 0 and the floor-clipped
/// cylinder. Pixels whose ray never hits anything have hit = false.
struct RaycastPixel {
  bool hit = false;
  bool barrel = false;
  Vec3 point = Vec3::Zero();
  double depth = 0.0;
};
std::vector<RaycastPixel> raycast_scene(const CylinderPose& cyl, const CameraView& cam);

}  // namespace barrel

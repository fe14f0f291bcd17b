#include "barrel/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "barrel/error.hpp"

namespace barrel {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_range(const Range& r, const char* name, double lo, double hi) {
  if (!(r.lo < r.hi) || r.lo < lo || r.hi > hi)
    throw Error(ErrorCode::kInvalidArgument, std::string("bad ") + name + " range");
}

}  // namespace

void GenConfig::validate() const {
  check_range(radius_range, "radius", 0.0, 1.0);
  if (!(radius_range.lo > 0.0 && radius_range.hi < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "radius range must lie inside (0, 1)");
  check_range(burial_range, "burial", 0.0, 1.0);
  if (!(axis_min_z >= 0.0 && axis_min_z < 1.0)) throw Error(ErrorCode::kInvalidArgument, "axis_min_z must be in [0, 1)");
  check_range(camera_distance_range, "camera distance", 0.0, std::numeric_limits<double>::infinity());
  if (!(camera_distance_range.lo > 0.0)) throw Error(ErrorCode::kInvalidArgument, "camera distance must be positive");
  // A fixed elevation (lo == hi) is allowed for cameras.
  if (!(camera_elevation_deg.lo <= camera_elevation_deg.hi) || camera_elevation_deg.lo <= 0.0 ||
      camera_elevation_deg.hi > 90.0)
    throw Error(ErrorCode::kInvalidArgument, "camera elevation must lie in (0, 90] degrees");
  if (render_resolution < 8) throw Error(ErrorCode::kInvalidArgument, "render_resolution must be >= 8");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw Error(ErrorCode::kInvalidArgument, "fov must lie in (0, 180)");
  if (views_per_cylinder < 1) throw Error(ErrorCode::kInvalidArgument, "views_per_cylinder must be >= 1");
  if (!(jitter_sigma >= 0.0) || !(centroid_xy_extent >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "negative jitter or centroid extent");
}

CylinderPose place_at_burial(const UnitAxis& axis, double radius, double cx, double cy, double target, double tol,
                             int max_iterations) {
  if (!(target >= 0.0 && target <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "burial target must lie in [0, 1]");
  CylinderPose cyl = CylinderPose::make(axis, Vec3(cx, cy, 0.0), radius);
  const std::size_t n = kDefaultBurialSamples;
  // burial(c_z) with a fixed sample set is #{offset_i <= -c_z} / n: monotone
  // non-increasing in c_z, so the sorted offsets turn each evaluation into a search.
  const Mat3 frame = axis_frame(axis);
  const double uz = frame(2, 0), vz = frame(2, 1), nz = frame(2, 2);
  Rng rng(kPlacementSeed);
  std::vector<double> offsets(n);
  for (auto& o : offsets) {
    const double rho = radius * std::sqrt(rng.uniform());
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    const double s = (rng.uniform() - 0.5) * cyl.height;
    o = rho * (std::cos(phi) * uz + std::sin(phi) * vz) + s * nz;
  }
  auto burial_at = [&](double cz) {
    cyl.centroid.z() = cz;
    return burial_fraction_mc(cyl, n, kPlacementSeed).fraction;
  };
  std::vector<double> sorted = offsets;
  std::sort(sorted.begin(), sorted.end());
  auto fast_burial = [&](double cz) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), -cz);
    return static_cast<double>(it - sorted.begin()) / static_cast<double>(n);
  };

  double lo = -(0.5 * cyl.height + radius) - 1e-3;  // fully buried
  double hi = 0.5 * cyl.height + radius + 1e-3;     // fully exposed
  for (int it = 0; it < max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = fast_burial(mid);
    if (std::abs(f - target) <= tol * 0.5) {
      // Confirm with the reference estimator before accepting.
      if (std::abs(burial_at(mid) - target) <= tol) {
        cyl.centroid.z() = mid;
        return cyl;
      }
    }
    if (f > target)
      lo = mid;
    else
      hi = mid;
  }
  const double mid = 0.5 * (lo + hi);
  if (std::abs(burial_at(mid) - target) <= tol) {
    cyl.centroid.z() = mid;
    return cyl;
  }
  throw Error(ErrorCode::kBisectionFailure, "burial target " + std::to_string(target) + " not reached");
}

CylinderPose sample_pose(Rng& rng, const GenConfig& cfg) {
  // Uniform on the spherical cap: n_z is uniform on [axis_min_z, 1].
  const double nz = rng.uniform(cfg.axis_min_z, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double s = std::sqrt(std::max(0.0, 1.0 - nz * nz));
  const UnitAxis axis = make_unit_axis(Vec3(s * std::cos(phi), s * std::sin(phi), nz));
  const double radius = rng.uniform(cfg.radius_range.lo, cfg.radius_range.hi);
  const double target = rng.uniform(cfg.burial_range.lo, cfg.burial_range.hi);
  const double cx = rng.uniform(-cfg.centroid_xy_extent, cfg.centroid_xy_extent);
  const double cy = rng.uniform(-cfg.centroid_xy_extent, cfg.centroid_xy_extent);
  return place_at_burial(axis, radius, cx, cy, target);
}

double focal_from_fov(int width, double fov_deg) { return 0.5 * width / std::tan(0.5 * fov_deg * kDegToRad); }

CameraView sample_camera(Rng& rng, const GenConfig& cfg, const Vec3& target) {
  const double distance = rng.uniform(cfg.camera_distance_range.lo, cfg.camera_distance_range.hi);
  const double elevation = rng.uniform(cfg.camera_elevation_deg.lo, cfg.camera_elevation_deg.hi) * kDegToRad;
  const double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Vec3 offset(distance * std::cos(elevation) * std::cos(azimuth),
                    distance * std::cos(elevation) * std::sin(azimuth), distance * std::sin(elevation));
  const int res = cfg.render_resolution;
  return look_at(target + offset, target, res, res, focal_from_fov(res, cfg.fov_deg));
}

Rendered render_sample(const SurfaceSample& surface, const CameraView& cam, const RenderOptions& opts) {
  const Vec3 eye = cam.center();
  const std::size_t n_pix = static_cast<std::size_t>(cam.width) * cam.height;
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> winner(opts.zbuffer ? n_pix : 0, kNone);
  std::vector<double> best(opts.zbuffer ? n_pix : 0, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> kept;
  std::vector<CameraView::Hit> hits(surface.points.rows());

  for (Eigen::Index i = 0; i < surface.points.rows(); ++i) {
    const Vec3 p = surface.points.row(i).transpose();
    if (p.z() < 0.0) continue;
    if (opts.backface_cull && surface.normals.row(i).dot((p - eye).transpose()) >= 0.0) continue;
    const auto hit = cam.project(p);
    if (!hit) continue;
    hits[i] = *hit;
    if (!opts.zbuffer) {
      kept.push_back(static_cast<std::size_t>(i));
      continue;
    }
    if (hit->depth < best[hit->pixel]) {
      best[hit->pixel] = hit->depth;
      winner[hit->pixel] = static_cast<std::size_t>(i);
    }
  }
  if (opts.zbuffer)
    for (std::size_t px = 0; px < n_pix; ++px)
      if (winner[px] != kNone) kept.push_back(winner[px]);
  if (kept.empty()) throw Error(ErrorCode::kEmptyRender, "no surface point is visible from the camera");

  Rendered out;
  out.points = select_rows(surface.points, kept);
  out.pixels.reserve(kept.size());
  out.depths.reserve(kept.size());
  for (std::size_t k : kept) {
    out.pixels.push_back(hits[k].pixel);
    out.depths.push_back(hits[k].depth);
  }
  return out;
}

Rendered render_visible(const CylinderPose& cyl, const CameraView& cam, const RenderOptions& opts) {
  return render_sample(sample_cylinder_surface_with_normals(cyl, opts.n_side, opts.n_cap, opts.seed), cam, opts);
}

PointCloud render_visible_points(const CylinderPose& cyl, const CameraView& cam, const RenderOptions& opts) {
  return render_visible(cyl, cam, opts).points;
}

GenStats generate_dataset(const GenConfig& cfg, const std::function<void(LabeledSample&&)>& sink) {
  cfg.validate();
  constexpr std::size_t kMaxAttempts = 10;
  GenStats stats;
  for (std::size_t cyl_id = 0; cyl_id < cfg.n_cylinders; ++cyl_id) {
    Rng pose_rng(derive_seed(cfg.seed, {0, cyl_id}));
    const CylinderPose truth = sample_pose(pose_rng, cfg);
    const double burial_truth = burial_fraction_mc(truth, kDefaultBurialSamples, kPlacementSeed).fraction;
    const Vec3 target(truth.centroid.x(), truth.centroid.y(), 0.25 * truth.height);

    for (std::size_t view_id = 0; view_id < cfg.views_per_cylinder; ++view_id) {
      bool done = false;
      for (std::size_t attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
        const std::uint64_t stream = derive_seed(cfg.seed, {1, cyl_id, view_id, attempt});
        Rng rng(stream);
        LabeledSample s;
        s.camera = sample_camera(rng, cfg, target);
        RenderOptions opts;
        opts.seed = derive_seed(stream, {2});
        try {
          s.cloud = render_visible_points(truth, s.camera, opts);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kEmptyRender) throw;
          s.cloud.resize(0, 3);
        }
        if (cfg.jitter_sigma > 0.0 && s.cloud.rows() > 0) {
          std::vector<std::size_t> above;
          for (Eigen::Index i = 0; i < s.cloud.rows(); ++i) {
            for (int c = 0; c < 3; ++c) s.cloud(i, c) += cfg.jitter_sigma * rng.normal();
            if (s.cloud(i, 2) >= 0.0) above.push_back(static_cast<std::size_t>(i));
          }
          s.cloud = select_rows(s.cloud, above);
        }
        if (static_cast<std::size_t>(s.cloud.rows()) < std::max<std::size_t>(1, cfg.points_per_cloud_min)) {
          ++stats.n_redraws;
          continue;
        }
        s.truth = truth;
        s.burial_truth = burial_truth;
        s.cyl_id = cyl_id;
        s.view_id = view_id;
        s.sample_seed = stream;
        s.attempt = attempt;
        sink(std::move(s));
        ++stats.n_samples;
        done = true;
      }
      if (!done) ++stats.n_skipped;
    }
  }
  return stats;
}

std::vector<LabeledSample> generate_dataset(const GenConfig& cfg, GenStats* stats) {
  std::vector<LabeledSample> out;
  const GenStats s = generate_dataset(cfg, [&](LabeledSample&& sample) { out.push_back(std::move(sample)); });
  if (stats) *stats = s;
  return out;
}

namespace {

/// Smallest positive ray parameter hitting the cylinder surface at z >= 0.
std::optional<double> ray_cylinder(const CylinderPose& cyl, const Vec3& origin, const Vec3& dir) {
  const Mat3 frame = axis_frame(cyl.axis);
  const Vec3 o = frame.transpose() * (origin - cyl.centroid);
  const Vec3 d = frame.transpose() * dir;
  const double half = 0.5 * cyl.height;
  std::optional<double> best;
  auto consider = [&](double t) {
    if (!(t > 1e-12)) return;
    if ((origin + t * dir).z() < 0.0) return;
    if (!best || t < *best) best = t;
  };
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-18) {
    const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
    const double c = o.x() * o.x() + o.y() * o.y() - cyl.radius * cyl.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)})
        if (std::abs(o.z() + t * d.z()) <= half) consider(t);
    }
  }
  if (std::abs(d.z()) > 1e-18) {
    for (double cap : {half, -half}) {
      const double t = (cap - o.z()) / d.z();
      const double x = o.x() + t * d.x(), y = o.y() + t * d.y();
      if (x * x + y * y <= cyl.radius * cyl.radius) consider(t);
    }
  }
  return best;
}

}  // namespace

std::vector<std::size_t> zbuffer_visible(const PointCloud& pc, const CameraView& cam) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> winner(static_cast<std::size_t>(cam.width) * cam.height, kNone);
  std::vector<double> best(winner.size(), std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < pc.rows(); ++i) {
    const auto hit = cam.project(pc.row(i).transpose());
    if (!hit || !(hit->depth < best[hit->pixel])) continue;
    best[hit->pixel] = hit->depth;
    winner[hit->pixel] = static_cast<std::size_t>(i);
  }
  std::vector<std::size_t> out;
  for (std::size_t w : winner)
    if (w != kNone) out.push_back(w);
  return out;
}

std::vector<RaycastPixel> raycast_scene(const CylinderPose& cyl, const CameraView& cam) {
  std::vector<RaycastPixel> out(static_cast<std::size_t>(cam.width) * cam.height);
  const Vec3 eye = cam.center();
  const Vec3 forward = cam.extrinsics.rotation.row(2).transpose();
  for (int j = 0; j < cam.height; ++j) {
    for (int i = 0; i < cam.width; ++i) {
      const Vec3 dir = cam.pixel_ray(i, j);
      RaycastPixel& px = out[static_cast<std::size_t>(j) * cam.width + i];
      std::optional<double> t_floor;
      if (dir.z() < 0.0 && eye.z() > 0.0) t_floor = -eye.z() / dir.z();
      const auto t_cyl = ray_cylinder(cyl, eye, dir);
      if (t_cyl && (!t_floor || *t_cyl <= *t_floor)) {
        px.hit = true;
        px.barrel = true;
        px.point = eye + *t_cyl * dir;
      } else if (t_floor) {
        px.hit = true;
        px.point = eye + *t_floor * dir;
        px.point.z() = 0.0;
      }
      if (px.hit) px.depth = (px.point - eye).dot(forward);
    }
  }
  return out;
}

}  // namespace barrel

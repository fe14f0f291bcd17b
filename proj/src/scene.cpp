#include "barrel/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "barrel/error.hpp"
#include "barrel/synthgen.hpp"

namespace barrel {

BinaryMask BinaryMask::filled(int width, int height, bool value) {
  return {width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, value ? 1 : 0)};
}

std::size_t BinaryMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

void ScenePackage::validate() const {
  if (views.empty() || views.size() != masks.size() || views.size() != bboxes.size())
    throw Error(ErrorCode::kSchemaError, "views, masks and bboxes must be nonempty and of equal length");
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (!views[v].is_valid()) throw Error(ErrorCode::kSchemaError, "invalid camera " + std::to_string(v));
    if (masks[v].width != views[v].width || masks[v].height != views[v].height)
      throw Error(ErrorCode::kDimensionMismatch, "mask " + std::to_string(v) + " does not match its camera");
    if (!(bboxes[v].half_extent.array() > 0.0).all())
      throw Error(ErrorCode::kSchemaError, "bbox " + std::to_string(v) + " has non-positive extent");
  }
}

BinaryMask erode_mask(const BinaryMask& m) {
  BinaryMask out = BinaryMask::filled(m.width, m.height, false);
  for (int j = 2; j + 2 < m.height; ++j) {
    for (int i = 2; i + 2 < m.width; ++i) {
      bool all = true;
      for (int dj = -2; dj <= 2 && all; ++dj)
        for (int di = -2; di <= 2 && all; ++di) all = m.at(i + di, j + dj);
      out.set(i, j, all);
    }
  }
  return out;
}

BinaryMask dilate_mask(const BinaryMask& m, int radius) {
  if (radius < 0) throw Error(ErrorCode::kInvalidArgument, "dilation radius must be >= 0");
  BinaryMask out = BinaryMask::filled(m.width, m.height, false);
  for (int j = 0; j < m.height; ++j)
    for (int i = 0; i < m.width; ++i) {
      if (!m.at(i, j)) continue;
      for (int dj = std::max(-radius, -j); dj <= radius && j + dj < m.height; ++dj)
        for (int di = std::max(-radius, -i); di <= radius && i + di < m.width; ++di) out.set(i + di, j + dj, true);
    }
  return out;
}

BBox scale_bbox(const BBox& b, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::kInvalidArgument, "bbox scale must be positive");
  return {b.center, b.half_extent * alpha};
}

BinaryMask floor_region(const BBox& b, double alpha1, double alpha2, int width, int height) {
  if (!(alpha1 > alpha2 && alpha2 > 1.0)) throw Error(ErrorCode::kInvalidAlphas, "need alpha1 > alpha2 > 1");
  const BBox outer = scale_bbox(b, alpha1);
  const BBox inner = scale_bbox(b, alpha2);
  BinaryMask out = BinaryMask::filled(width, height, false);
  for (int j = 0; j < height; ++j)
    for (int i = 0; i < width; ++i) out.set(i, j, outer.contains(i, j) && !inner.contains(i, j));
  return out;
}

std::vector<std::size_t> masked_point_indices(const PointCloud& cloud, const CameraView& cam, const BinaryMask& mask) {
  if (mask.width != cam.width || mask.height != cam.height)
    throw Error(ErrorCode::kDimensionMismatch, "mask and camera sizes differ");
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    const auto hit = cam.project(cloud.row(i).transpose());
    if (hit && mask.bits[hit->pixel]) out.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

PointCloud extract_masked_points(const PointCloud& cloud, const CameraView& cam, const BinaryMask& mask) {
  return select_rows(cloud, masked_point_indices(cloud, cam, mask));
}

Plane fit_plane(const PointCloud& pc, const std::optional<Vec3>& up_hint) {
  if (pc.rows() < 3) throw Error(ErrorCode::kDegeneratePoints, "plane fit needs at least 3 points");
  const Vec3 centroid = cloud_mean(pc);
  const PointCloud centered = pc.rowwise() - centroid.transpose();
  const Mat3 cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();
  if (!(ev[1] > 1e-12 * std::max(1.0, ev[2]))) throw Error(ErrorCode::kDegeneratePoints, "points are collinear");
  Vec3 normal = es.eigenvectors().col(0).normalized();
  if (up_hint && up_hint->norm() > 1e-12) {
    if (normal.dot(*up_hint) < 0.0) normal = -normal;
  } else {
    normal = make_unit_axis(normal).vec();
  }
  return {normal, centroid};
}

RigidTransform floor_alignment(const Plane& plane) {
  RigidTransform t;
  t.rotation = Eigen::Quaterniond::FromTwoVectors(plane.normal, Vec3::UnitZ()).toRotationMatrix();
  t.translation = Vec3(0.0, 0.0, -(t.rotation * plane.point).z());
  return t;
}

std::pair<PointCloud, RigidTransform> align_to_floor(const PointCloud& cloud, const Plane& plane) {
  const RigidTransform t = floor_alignment(plane);
  return {apply_transform(t, cloud), t};
}

SceneExtraction extract_scene(const ScenePackage& pkg, const ExtractConfig& cfg) {
  pkg.validate();
  const std::size_t n = static_cast<std::size_t>(pkg.full_cloud.rows());
  std::vector<int> barrel_votes(n, 0), barrel_vetoes(n, 0), floor_votes(n, 0);
  for (std::size_t v = 0; v < pkg.views.size(); ++v) {
    const CameraView& cam = pkg.views[v];
    const BinaryMask barrel_mask = erode_mask(pkg.masks[v]);
    const BinaryMask veto_free = dilate_mask(pkg.masks[v], 1);
    const BinaryMask floor_mask = floor_region(pkg.bboxes[v], cfg.alpha1, cfg.alpha2, cam.width, cam.height);
    for (std::size_t i = 0; i < n; ++i) {
      const auto hit = cam.project(pkg.full_cloud.row(i).transpose());
      if (!hit) continue;
      if (barrel_mask.bits[hit->pixel]) ++barrel_votes[i];
      if (!veto_free.bits[hit->pixel]) ++barrel_vetoes[i];
      if (floor_mask.bits[hit->pixel]) ++floor_votes[i];
    }
  }

  SceneExtraction out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool barrel = barrel_votes[i] > 0 && (cfg.barrel_merge == MergeRule::kAnyView || barrel_vetoes[i] == 0);
    if (barrel) out.barrel_indices.push_back(i);
    if (floor_votes[i] > 0 && !barrel) out.floor_indices.push_back(i);
  }
  if (out.barrel_indices.empty()) throw Error(ErrorCode::kEmptyBarrelCloud, "no point falls inside the barrel masks");
  if (out.floor_indices.empty()) throw Error(ErrorCode::kEmptyFloorCloud, "no point falls inside the floor regions");

  const PointCloud floor_in = select_rows(pkg.full_cloud, out.floor_indices);
  const Vec3 floor_mean = cloud_mean(floor_in);
  Vec3 up = Vec3::Zero();
  for (const CameraView& cam : pkg.views) up += (cam.center() - floor_mean).normalized();
  try {
    out.plane = fit_plane(floor_in, up);
  } catch (const Error& e) {
    throw Error(ErrorCode::kEmptyFloorCloud, std::string("floor points do not define a plane: ") + e.what());
  }
  out.to_floor = floor_alignment(out.plane);
  out.barrel = apply_transform(out.to_floor, select_rows(pkg.full_cloud, out.barrel_indices));
  out.floor = apply_transform(out.to_floor, floor_in);
  for (const CameraView& cam : pkg.views) out.views.push_back(transform_camera(cam, out.to_floor));
  return out;
}

SyntheticScene synthesize_scene(const CylinderPose& truth, std::span<const CameraView> floor_views,
                                const RigidTransform& input_from_floor, double floor_extent) {
  SyntheticScene scene;
  scene.truth = truth;
  scene.burial_truth = burial_fraction_mc(truth, kDefaultBurialSamples, kPlacementSeed).fraction;
  scene.input_from_floor = input_from_floor;

  std::vector<Vec3> points;
  for (const CameraView& cam : floor_views) {
    const auto pixels = raycast_scene(truth, cam);
    BinaryMask mask = BinaryMask::filled(cam.width, cam.height, false);
    int lo_i = cam.width, hi_i = -1, lo_j = cam.height, hi_j = -1;
    for (int j = 0; j < cam.height; ++j) {
      for (int i = 0; i < cam.width; ++i) {
        const RaycastPixel& px = pixels[static_cast<std::size_t>(j) * cam.width + i];
        if (!px.hit) continue;
        if (px.barrel) {
          mask.set(i, j, true);
          lo_i = std::min(lo_i, i), hi_i = std::max(hi_i, i);
          lo_j = std::min(lo_j, j), hi_j = std::max(hi_j, j);
          points.push_back(px.point);
        } else if (std::abs(px.point.x() - truth.centroid.x()) <= floor_extent &&
                   std::abs(px.point.y() - truth.centroid.y()) <= floor_extent) {
          points.push_back(px.point);
        }
      }
    }
    if (hi_i < 0) throw Error(ErrorCode::kEmptyRender, "barrel is not visible in a synthetic view");
    BBox box;
    box.center = {0.5 * (lo_i + hi_i), 0.5 * (lo_j + hi_j)};
    box.half_extent = {0.5 * (hi_i - lo_i) + 0.5, 0.5 * (hi_j - lo_j) + 0.5};
    scene.package.views.push_back(transform_camera(cam, input_from_floor));
    scene.package.masks.push_back(std::move(mask));
    scene.package.bboxes.push_back(box);
  }
  PointCloud cloud(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) cloud.row(i) = points[i].transpose();
  scene.package.full_cloud = apply_transform(input_from_floor, cloud);
  return scene;
}

}  // namespace barrel

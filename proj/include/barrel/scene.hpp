#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "barrel/camera.hpp"
#include "barrel/geom.hpp"

namespace barrel {

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  static BinaryMask filled(int width, int height, bool value);
  bool at(int i, int j) const { return bits[static_cast<std::size_t>(j) * width + i] != 0; }
  void set(int i, int j, bool v) { bits[static_cast<std::size_t>(j) * width + i] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

/// Axis-aligned pixel box. Pixel (i, j) is inside when |i - cx| <= hx and |j - cy| <= hy.
struct BBox {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2d half_extent = Eigen::Vector2d::Ones();

  bool contains(int i, int j) const {
    return std::abs(i - center.x()) <= half_extent.x() && std::abs(j - center.y()) <= half_extent.y();
  }
};

/// Inputs produced by external reconstruction and segmentation.
struct ScenePackage {
  PointCloud full_cloud;  // arbitrary input frame
  std::vector<CameraView> views;
  std::vector<BinaryMask> masks;
  std::vector<BBox> bboxes;

  void validate() const;
};

/// Erosion by an all-ones 5x5 element; outside the image counts as false.
BinaryMask erode_mask(const BinaryMask& m);

/// Dilation by a (2 radius + 1)^2 square; pixels outside the image are ignored.
BinaryMask dilate_mask(const BinaryMask& m, int radius);

/// Same center, half extents times alpha. Throws InvalidArgument for alpha <= 0.
BBox scale_bbox(const BBox& b, double alpha);

/// Pixels inside scale_bbox(b, alpha1) but outside scale_bbox(b, alpha2).
/// Throws InvalidAlphas unless alpha1 > alpha2 > 1.
BinaryMask floor_region(const BBox& b, double alpha1, double alpha2, int width, int height);

/// Indices of points in front of the camera whose nearest pixel is set.
std::vector<std::size_t> masked_point_indices(const PointCloud& cloud, const CameraView& cam, const BinaryMask& mask);
PointCloud extract_masked_points(const PointCloud& cloud, const CameraView& cam, const BinaryMask& mask);

struct Plane {
  Vec3 normal = Vec3::UnitZ();  // unit
  Vec3 point = Vec3::Zero();
};

/// Total least squares plane through the centroid. The normal is oriented
/// along `up_hint` when given, otherwise into n_z >= 0. Throws DegeneratePoints.
Plane fit_plane(const PointCloud& pc, const std::optional<Vec3>& up_hint = std::nullopt);

/// Minimal rotation taking the plane normal to +z, then a vertical shift that
/// puts the plane point on z = 0.
RigidTransform floor_alignment(const Plane& plane);
std::pair<PointCloud, RigidTransform> align_to_floor(const PointCloud& cloud, const Plane& plane);

enum class MergeRule {
  kAnyView,   // kept if masked in by at least one view
  kAllViews,  // also rejected by any view that projects it more than a pixel outside its raw mask
};

struct SceneExtraction {
  PointCloud barrel;  // floor frame
  PointCloud floor;   // floor frame
  RigidTransform to_floor;
  Plane plane;                     // input frame
  std::vector<CameraView> views;   // floor frame
  std::vector<std::size_t> barrel_indices;
  std::vector<std::size_t> floor_indices;
};

struct ExtractConfig {
  double alpha1 = 1.8;
  double alpha2 = 1.2;
  MergeRule barrel_merge = MergeRule::kAllViews;
};

/// Throws EmptyBarrelCloud or EmptyFloorCloud.
SceneExtraction extract_scene(const ScenePackage& pkg, const ExtractConfig& cfg = {});

/// A package rendered from known truth: per-pixel ray-cast point maps for each
/// camera (floor limited to a square of half-size floor_extent around the
/// barrel), exact barrel masks and their boxes, all moved into an input frame.
struct SyntheticScene {
  ScenePackage package;
  CylinderPose truth;          // floor frame
  double burial_truth = 0.0;
  RigidTransform input_from_floor;
};
SyntheticScene synthesize_scene(const CylinderPose& truth, std::span<const CameraView> floor_views,
                                const RigidTransform& input_from_floor, double floor_extent = 2.5);

}  // namespace barrel

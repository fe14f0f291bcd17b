#pragma once

#include <optional>

#include "barrel/geom.hpp"

namespace barrel {

/// Pinhole camera, OpenCV convention (x right, y down, z forward).
/// Pixel (i, j) covers continuous coordinates [i - 0.5, i + 0.5).
struct CameraView {
  int width = 128;
  int height = 128;
  double focal = 128.0;
  Eigen::Vector2d principal_point{63.5, 63.5};
  RigidTransform extrinsics;  // world -> camera

  Vec3 center() const { return -(extrinsics.rotation.transpose() * extrinsics.translation); }
  Vec3 to_camera(const Vec3& p) const { return extrinsics.apply(p); }

  /// Row-major pixel index of the nearest pixel and the camera depth, or
  /// nothing when the point is behind the camera or outside the image.
  struct Hit {
    int pixel;
    double depth;
  };
  std::optional<Hit> project(const Vec3& p) const;

  /// Unit ray direction in world coordinates through the center of pixel (i, j).
  Vec3 pixel_ray(int i, int j) const;

  bool is_valid() const;
};

/// Camera at `center` looking at `target`. Uses +y as the reference up when
/// the view direction is vertical.
CameraView look_at(const Vec3& center, const Vec3& target, int width, int height, double focal);

/// Moves a camera along with the scene: the returned view sees t(p) where the
/// input view saw p.
CameraView transform_camera(const CameraView& cam, const RigidTransform& t);

}  // namespace barrel

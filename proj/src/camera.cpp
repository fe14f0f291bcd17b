#include "barrel/camera.hpp"

#include <cmath>

#include "barrel/error.hpp"

namespace barrel {

std::optional<CameraView::Hit> CameraView::project(const Vec3& p) const {
  const Vec3 pc = to_camera(p);
  if (!(pc.z() > 0.0)) return std::nullopt;
  const double u = focal * pc.x() / pc.z() + principal_point.x();
  const double v = focal * pc.y() / pc.z() + principal_point.y();
  if (!(u >= -0.5 && u < width - 0.5 && v >= -0.5 && v < height - 0.5)) return std::nullopt;
  const int i = static_cast<int>(std::floor(u + 0.5));
  const int j = static_cast<int>(std::floor(v + 0.5));
  if (i < 0 || i >= width || j < 0 || j >= height) return std::nullopt;
  return Hit{j * width + i, pc.z()};
}

Vec3 CameraView::pixel_ray(int i, int j) const {
  const Vec3 dir((i - principal_point.x()) / focal, (j - principal_point.y()) / focal, 1.0);
  return (extrinsics.rotation.transpose() * dir).normalized();
}

bool CameraView::is_valid() const {
  return width >= 1 && height >= 1 && focal > 0.0 && extrinsics.is_valid(1e-6) && principal_point.allFinite();
}

CameraView look_at(const Vec3& center, const Vec3& target, int width, int height, double focal) {
  const Vec3 forward = (target - center).normalized();
  if (!forward.allFinite()) throw Error(ErrorCode::kInvalidArgument, "camera center coincides with target");
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraView cam;
  cam.width = width;
  cam.height = height;
  cam.focal = focal;
  cam.principal_point = {(width - 1) / 2.0, (height - 1) / 2.0};
  cam.extrinsics.rotation.row(0) = right.transpose();
  cam.extrinsics.rotation.row(1) = down.transpose();
  cam.extrinsics.rotation.row(2) = forward.transpose();
  cam.extrinsics.translation = -(cam.extrinsics.rotation * center);
  return cam;
}

CameraView transform_camera(const CameraView& cam, const RigidTransform& t) {
  CameraView out = cam;
  // world' = t(world), so camera = E(world) = E(t^-1(world')).
  out.extrinsics = cam.extrinsics * t.inverse();
  return out;
}

}  // namespace barrel

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace barrel {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// One point per row. Scene units: the barrel height is 1.
template <typename Scalar>
using Cloud = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
using PointCloud = Cloud<double>;

/// Unit direction with n_z >= 0. Only constructible through make_unit_axis.
class UnitAxis {
 public:
  UnitAxis() : n_(Vec3::UnitZ()) {}

  const Vec3& vec() const { return n_; }
  double x() const { return n_.x(); }
  double y() const { return n_.y(); }
  double z() const { return n_.z(); }

 private:
  explicit UnitAxis(const Vec3& n) : n_(n) {}
  friend UnitAxis make_unit_axis(const Vec3& v);

  Vec3 n_;
};

/// Normalizes v and flips it into the upper hemisphere. For n_z == 0 the
/// first nonzero of (x, y) is made positive. Throws ZeroVector for |v| <= 1e-12.
UnitAxis make_unit_axis(const Vec3& v);

/// Height is fixed to 1; radius is a fraction of it.
struct CylinderPose {
  UnitAxis axis;
  Vec3 centroid = Vec3::Zero();
  double radius = 0.5;
  double height = 1.0;

  /// Validating constructor: radius in (0, 1), finite centroid.
  static CylinderPose make(const UnitAxis& axis, const Vec3& centroid, double radius);
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
  /// (this * other)(p) == this(other(p)).
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
  bool is_valid(double tol = 1e-9) const;
};

struct BurialResult {
  double fraction = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_below = 0;
};

inline constexpr std::size_t kDefaultBurialSamples = 100000;

/// Columns (u, v, n): an orthonormal right-handed frame whose third axis is n.
Mat3 axis_frame(const UnitAxis& axis);

/// Fraction of the cylinder volume with z <= 0, by uniform volume sampling.
BurialResult burial_fraction_mc(const CylinderPose& cyl, std::size_t n_samples = kDefaultBurialSamples,
                                std::uint64_t seed = 0);

/// Closed form for exactly vertical or exactly horizontal axes (tolerance 1e-9).
/// Throws UnsupportedOrientation otherwise.
double burial_fraction_analytic(const CylinderPose& cyl);

/// Area fraction of a disk of radius r whose center sits at height d that
/// lies at or below the line z = 0.
double circular_segment_fraction(double r, double d);

struct SurfaceSample {
  PointCloud points;
  PointCloud normals;  // outward unit normals, one per point
};

/// Area-uniform samples: n_side on the lateral surface, n_cap on each cap.
SurfaceSample sample_cylinder_surface_with_normals(const CylinderPose& cyl, std::size_t n_side,
                                                   std::size_t n_cap, std::uint64_t seed);
PointCloud sample_cylinder_surface(const CylinderPose& cyl, std::size_t n_side, std::size_t n_cap,
                                   std::uint64_t seed);

template <typename Derived>
PointCloud apply_transform(const RigidTransform& t, const Eigen::MatrixBase<Derived>& pc) {
  PointCloud out(pc.rows(), 3);
  out.noalias() = (pc.template cast<double>() * t.rotation.transpose()).rowwise() + t.translation.transpose();
  return out;
}

double distance_to_axis(const CylinderPose& cyl, const Vec3& p);
/// Signed offset of p along the axis, measured from the centroid.
double axial_offset(const CylinderPose& cyl, const Vec3& p);

/// |<a, b>|, the sign-invariant axis agreement.
inline double cosine_similarity(const Vec3& a, const Vec3& b) {
  return std::abs(a.normalized().dot(b.normalized()));
}

Vec3 cloud_mean(const PointCloud& pc);

/// Gathers the listed rows, in order.
PointCloud select_rows(const PointCloud& pc, const std::vector<std::size_t>& rows);

}  // namespace barrel

#include "barrel/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "barrel/error.hpp"
#include "barrel/rng.hpp"

namespace barrel {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kUnsupportedOrientation: return "UnsupportedOrientation";
    case ErrorCode::kBisectionFailure: return "BisectionFailure";
    case ErrorCode::kEmptyRender: return "EmptyRender";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kDegenerateNormals: return "DegenerateNormals";
    case ErrorCode::kNoValidModel: return "NoValidModel";
    case ErrorCode::kCollinearPoints: return "CollinearPoints";
    case ErrorCode::kEmptyCloud: return "EmptyCloud";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kDivergedTraining: return "DivergedTraining";
    case ErrorCode::kEmptyTarget: return "EmptyTarget";
    case ErrorCode::kAllStartsFailed: return "AllStartsFailed";
    case ErrorCode::kInvalidAlphas: return "InvalidAlphas";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDegeneratePoints: return "DegeneratePoints";
    case ErrorCode::kEmptyBarrelCloud: return "EmptyBarrelCloud";
    case ErrorCode::kEmptyFloorCloud: return "EmptyFloorCloud";
    case ErrorCode::kMalformedPly: return "MalformedPly";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

UnitAxis make_unit_axis(const Vec3& v) {
  const double norm = v.norm();
  if (!(norm > 1e-12) || !v.allFinite()) {
    std::ostringstream os;
    os << "cannot normalize (" << v.transpose() << ")";
    throw Error(ErrorCode::kZeroVector, os.str());
  }
  Vec3 n = v / norm;
  bool flip = n.z() < 0.0;
  if (n.z() == 0.0) flip = n.x() != 0.0 ? n.x() < 0.0 : n.y() < 0.0;
  if (flip) n = -n;
  // Keep -0.0 out of the canonical form.
  for (int i = 0; i < 3; ++i)
    if (n[i] == 0.0) n[i] = 0.0;
  return UnitAxis(n);
}

CylinderPose CylinderPose::make(const UnitAxis& axis, const Vec3& centroid, double radius) {
  if (!(radius > 0.0 && radius < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "radius must lie in (0, 1), got " + std::to_string(radius));
  if (!centroid.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite centroid");
  return CylinderPose{axis, centroid, radius, 1.0};
}

bool RigidTransform::is_valid(double tol) const {
  return std::abs(rotation.determinant() - 1.0) <= tol &&
         (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         translation.allFinite();
}

Mat3 axis_frame(const UnitAxis& axis) {
  const Vec3& n = axis.vec();
  // Pick the world axis least aligned with n as the seed for u.
  Vec3 seed = Vec3::UnitX();
  if (std::abs(n.x()) > std::abs(n.y()) && std::abs(n.x()) > std::abs(n.z())) seed = Vec3::UnitY();
  Vec3 u = (seed - seed.dot(n) * n).normalized();
  Vec3 v = n.cross(u);
  Mat3 frame;
  frame << u, v, n;
  return frame;
}

BurialResult burial_fraction_mc(const CylinderPose& cyl, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw Error(ErrorCode::kInvalidArgument, "n_samples must be >= 1");
  const Mat3 frame = axis_frame(cyl.axis);
  // Only heights matter: z = c_z + rho cos(phi) u_z + rho sin(phi) v_z + s n_z.
  const double uz = frame(2, 0), vz = frame(2, 1), nz = frame(2, 2);
  Rng rng(seed);
  std::size_t below = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double rho = cyl.radius * std::sqrt(rng.uniform());
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    const double s = (rng.uniform() - 0.5) * cyl.height;
    const double z = cyl.centroid.z() + rho * (std::cos(phi) * uz + std::sin(phi) * vz) + s * nz;
    if (z <= 0.0) ++below;
  }
  return {static_cast<double>(below) / static_cast<double>(n_samples), n_samples, below};
}

double circular_segment_fraction(double r, double d) {
  if (d >= r) return 0.0;
  if (d <= -r) return 1.0;
  const double area = r * r * std::acos(d / r) - d * std::sqrt(r * r - d * d);
  return area / (std::numbers::pi * r * r);
}

double burial_fraction_analytic(const CylinderPose& cyl) {
  const double nz = cyl.axis.z();
  if (std::abs(std::abs(nz) - 1.0) <= 1e-9)
    return std::clamp((cyl.height / 2.0 - cyl.centroid.z()) / cyl.height, 0.0, 1.0);
  if (std::abs(nz) <= 1e-9) return circular_segment_fraction(cyl.radius, cyl.centroid.z());
  throw Error(ErrorCode::kUnsupportedOrientation, "closed form needs a vertical or horizontal axis");
}

SurfaceSample sample_cylinder_surface_with_normals(const CylinderPose& cyl, std::size_t n_side,
                                                   std::size_t n_cap, std::uint64_t seed) {
  const std::size_t total = n_side + 2 * n_cap;
  if (total < 1) throw Error(ErrorCode::kInvalidArgument, "empty surface sample requested");
  const Mat3 frame = axis_frame(cyl.axis);
  const Vec3 u = frame.col(0), v = frame.col(1), n = frame.col(2);
  Rng rng(seed);
  SurfaceSample out{PointCloud(total, 3), PointCloud(total, 3)};
  std::size_t row = 0;
  for (std::size_t i = 0; i < n_side; ++i, ++row) {
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    const double s = (rng.uniform() - 0.5) * cyl.height;
    const Vec3 radial = std::cos(phi) * u + std::sin(phi) * v;
    out.points.row(row) = (cyl.centroid + cyl.radius * radial + s * n).transpose();
    out.normals.row(row) = radial.transpose();
  }
  for (int cap = 0; cap < 2; ++cap) {
    const double side = cap == 0 ? 0.5 : -0.5;
    for (std::size_t i = 0; i < n_cap; ++i, ++row) {
      const double rho = cyl.radius * std::sqrt(rng.uniform());
      const double phi = 2.0 * std::numbers::pi * rng.uniform();
      const Vec3 p = cyl.centroid + rho * (std::cos(phi) * u + std::sin(phi) * v) + side * cyl.height * n;
      out.points.row(row) = p.transpose();
      out.normals.row(row) = (side > 0 ? n : Vec3(-n)).transpose();
    }
  }
  return out;
}

PointCloud sample_cylinder_surface(const CylinderPose& cyl, std::size_t n_side, std::size_t n_cap,
                                   std::uint64_t seed) {
  return sample_cylinder_surface_with_normals(cyl, n_side, n_cap, seed).points;
}

double distance_to_axis(const CylinderPose& cyl, const Vec3& p) {
  const Vec3 d = p - cyl.centroid;
  return (d - d.dot(cyl.axis.vec()) * cyl.axis.vec()).norm();
}

double axial_offset(const CylinderPose& cyl, const Vec3& p) { return (p - cyl.centroid).dot(cyl.axis.vec()); }

Vec3 cloud_mean(const PointCloud& pc) {
  if (pc.rows() == 0) throw Error(ErrorCode::kEmptyCloud, "mean of an empty cloud");
  return pc.colwise().mean().transpose();
}

PointCloud select_rows(const PointCloud& pc, const std::vector<std::size_t>& rows) {
  PointCloud out(rows.size(), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = pc.row(rows[i]);
  return out;
}

}  // namespace barrel

#pragma once

#include <cstdint>
#include <vector>

#include "barrel/geom.hpp"

namespace barrel {

using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct NormalCloud {
  PointCloud points;
  PointCloud normals;  // unit, one per point
};

/// PCA normals over the k nearest neighbors (the point itself included),
/// flipped to point away from the cloud centroid. Throws TooFewPoints unless
/// k >= 3 and the cloud has at least k + 1 points.
NormalCloud estimate_normals(const PointCloud& pc, std::size_t k = 16);

/// Direction minimizing sum (n_i . a)^2: the smallest eigenvector of the
/// normal scatter matrix. Throws DegenerateNormals when the two smallest
/// eigenvalues of the mean scatter are within 1e-9.
UnitAxis axis_from_normals(const PointCloud& normals);
inline UnitAxis axis_from_normals(const NormalCloud& nc) { return axis_from_normals(nc.normals); }

struct Circle {
  Eigen::Vector2d center;
  double radius;
};

/// Algebraic least-squares circle. Throws CollinearPoints.
Circle circle_fit_2d(const Points2& pts);

struct MlesacConfig {
  std::size_t n_iterations = 500;
  double inlier_sigma = 0.01;
  std::size_t min_sample = 9;
  std::size_t em_iterations = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// An infinite cylinder: axis line through `origin` with direction `axis`.
struct CylinderModel {
  UnitAxis axis;
  Vec3 origin = Vec3::Zero();
  double radius = 0.0;
};

/// |distance to the axis line - radius| for every point.
Eigen::VectorXd cylinder_residuals(const PointCloud& pc, const CylinderModel& model);

/// MLESAC negative log-likelihood of a model: Gaussian inliers (sigma) mixed
/// with outliers uniform over the cloud's bounding-box diagonal, the mixing
/// weight refined by EM.
double mlesac_score(const PointCloud& pc, const CylinderModel& model, const MlesacConfig& cfg);

/// Fits a model to a subset: axis from the normals, circle in the plane
/// normal to the axis. Throws on degenerate subsets or radius outside (0, 1).
CylinderModel fit_cylinder_model(const PointCloud& points, const PointCloud& normals);

struct MlesacResult {
  CylinderPose pose;  // centroid at the mean axial coordinate of the inliers
  CylinderModel model;
  std::vector<std::size_t> inliers;
  double score = 0.0;
};

/// Throws NoValidModel when every hypothesis is degenerate.
MlesacResult mlesac_cylinder(const PointCloud& pc, const NormalCloud& nc, const MlesacConfig& cfg);

struct ClassicalConfig {
  std::size_t k_neighbors = 16;
  MlesacConfig mlesac;
  std::size_t burial_samples = kDefaultBurialSamples;
  std::uint64_t burial_seed = 1;
};

struct ClassicalFit {
  CylinderPose pose;
  BurialResult burial;
  std::size_t n_inliers = 0;
  double score = 0.0;
};

/// Normals, then MLESAC, then Monte Carlo burial. Needs at least 16 points.
ClassicalFit classical_pipeline(const PointCloud& pc, const ClassicalConfig& cfg = {});

}  // namespace barrel

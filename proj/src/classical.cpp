#include "barrel/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "barrel/error.hpp"
#include "barrel/kdtree.hpp"
#include "barrel/rng.hpp"

namespace barrel {

NormalCloud estimate_normals(const PointCloud& pc, std::size_t k) {
  if (k < 3 || static_cast<std::size_t>(pc.rows()) < k + 1)
    throw Error(ErrorCode::kTooFewPoints,
                "normal estimation needs k >= 3 and more than k points, got " + std::to_string(pc.rows()));
  const KdTree tree(pc);
  const Vec3 center = cloud_mean(pc);
  NormalCloud out{pc, PointCloud(pc.rows(), 3)};
  for (Eigen::Index i = 0; i < pc.rows(); ++i) {
    const Vec3 p = pc.row(i).transpose();
    const auto nbrs = tree.knn(p, k);
    Vec3 mean = Vec3::Zero();
    for (const auto& nb : nbrs) mean += pc.row(nb.index).transpose();
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& nb : nbrs) {
      const Vec3 d = pc.row(nb.index).transpose() - mean;
      cov.noalias() += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 n = es.eigenvectors().col(0);
    if (n.dot(p - center) < 0.0) n = -n;
    out.normals.row(i) = n.transpose();
  }
  return out;
}

UnitAxis axis_from_normals(const PointCloud& normals) {
  if (normals.rows() < 3) throw Error(ErrorCode::kDegenerateNormals, "need at least 3 normals");
  const Mat3 scatter = (normals.transpose() * normals) / static_cast<double>(normals.rows());
  Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
  const Vec3 ev = es.eigenvalues();
  if (ev[1] - ev[0] <= 1e-9) throw Error(ErrorCode::kDegenerateNormals, "axis is ambiguous");
  return make_unit_axis(es.eigenvectors().col(0));
}

Circle circle_fit_2d(const Points2& pts) {
  if (pts.rows() < 3) throw Error(ErrorCode::kCollinearPoints, "circle fit needs at least 3 points");
  const Eigen::RowVector2d mean = pts.colwise().mean();
  const Points2 c = pts.rowwise() - mean;
  const Eigen::Matrix2d cov = c.transpose() * c;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  if (!(es.eigenvalues()[0] > 1e-12 * std::max(1.0, es.eigenvalues()[1])))
    throw Error(ErrorCode::kCollinearPoints, "points are collinear");

  // x^2 + y^2 + D x + E y + F = 0, solved in centered coordinates.
  Eigen::MatrixXd a(c.rows(), 3);
  a.col(0) = c.col(0);
  a.col(1) = c.col(1);
  a.col(2).setOnes();
  const Eigen::VectorXd b = -c.rowwise().squaredNorm();
  const Eigen::Vector3d sol = a.colPivHouseholderQr().solve(b);
  const Eigen::Vector2d center(-sol[0] / 2.0, -sol[1] / 2.0);
  const double r2 = center.squaredNorm() - sol[2];
  if (!(r2 > 0.0) || !std::isfinite(r2)) throw Error(ErrorCode::kCollinearPoints, "no real circle");
  return {center + mean.transpose(), std::sqrt(r2)};
}

void MlesacConfig::validate() const {
  if (n_iterations < 1 || !(inlier_sigma > 0.0) || min_sample < 3)
    throw Error(ErrorCode::kInvalidArgument, "invalid MLESAC configuration");
}

Eigen::VectorXd cylinder_residuals(const PointCloud& pc, const CylinderModel& model) {
  const Vec3& a = model.axis.vec();
  Eigen::VectorXd out(pc.rows());
  for (Eigen::Index i = 0; i < pc.rows(); ++i) {
    const Vec3 d = pc.row(i).transpose() - model.origin;
    out[i] = std::abs((d - d.dot(a) * a).norm() - model.radius);
  }
  return out;
}

namespace {

double outlier_range(const PointCloud& pc) {
  const double diag = (pc.colwise().maxCoeff() - pc.colwise().minCoeff()).norm();
  return std::max(diag, 1e-6);
}

double score_residuals(const Eigen::VectorXd& e, double sigma, double nu, std::size_t em_iterations) {
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  const Eigen::ArrayXd gauss = norm * (-(e.array().square()) / (2.0 * sigma * sigma)).exp();
  double gamma = 0.5;
  for (std::size_t it = 0; it < em_iterations; ++it) {
    const Eigen::ArrayXd pin = gamma * gauss;
    const double pout = (1.0 - gamma) / nu;
    gamma = (pin / (pin + pout)).mean();
  }
  return -((gamma * gauss + (1.0 - gamma) / nu).log().sum());
}

}  // namespace

double mlesac_score(const PointCloud& pc, const CylinderModel& model, const MlesacConfig& cfg) {
  return score_residuals(cylinder_residuals(pc, model), cfg.inlier_sigma, outlier_range(pc), cfg.em_iterations);
}

CylinderModel fit_cylinder_model(const PointCloud& points, const PointCloud& normals) {
  const UnitAxis axis = axis_from_normals(normals);
  const Mat3 frame = axis_frame(axis);
  const Points2 uv = points * frame.leftCols<2>();
  const Circle circle = circle_fit_2d(uv);
  if (!(circle.radius > 0.0 && circle.radius < 1.0))
    throw Error(ErrorCode::kNoValidModel, "radius outside (0, 1)");
  return {axis, frame.leftCols<2>() * circle.center, circle.radius};
}

MlesacResult mlesac_cylinder(const PointCloud& pc, const NormalCloud& nc, const MlesacConfig& cfg) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(pc.rows());
  if (n < cfg.min_sample || static_cast<std::size_t>(nc.normals.rows()) != n)
    throw Error(ErrorCode::kTooFewPoints, "MLESAC needs at least min_sample points with normals");
  const double nu = outlier_range(pc);

  std::optional<CylinderModel> best;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pool(n);
  std::vector<std::size_t> pick(cfg.min_sample);
  for (std::size_t it = 0; it < cfg.n_iterations; ++it) {
    Rng rng(derive_seed(cfg.seed, {it}));
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t j = 0; j < cfg.min_sample; ++j) {
      std::swap(pool[j], pool[j + rng.index(n - j)]);
      pick[j] = pool[j];
    }
    CylinderModel model;
    try {
      model = fit_cylinder_model(select_rows(pc, pick), select_rows(nc.normals, pick));
    } catch (const Error&) {
      continue;
    }
    const double score = score_residuals(cylinder_residuals(pc, model), cfg.inlier_sigma, nu, cfg.em_iterations);
    if (score < best_score) {
      best_score = score;
      best = model;
    }
  }
  if (!best) throw Error(ErrorCode::kNoValidModel, "every MLESAC hypothesis was degenerate");

  auto inliers_of = [&](const CylinderModel& m) {
    const Eigen::VectorXd e = cylinder_residuals(pc, m);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (e[i] <= 2.0 * cfg.inlier_sigma) idx.push_back(i);
    return idx;
  };

  // Refit on the consensus set; keep it only if it does not score worse.
  std::vector<std::size_t> inliers = inliers_of(*best);
  if (inliers.size() >= 3) {
    try {
      const CylinderModel refit = fit_cylinder_model(select_rows(pc, inliers), select_rows(nc.normals, inliers));
      const double score = score_residuals(cylinder_residuals(pc, refit), cfg.inlier_sigma, nu, cfg.em_iterations);
      if (score <= best_score) {
        best_score = score;
        best = refit;
        inliers = inliers_of(refit);
      }
    } catch (const Error&) {
    }
  }
  if (inliers.empty()) {
    inliers.resize(n);
    std::iota(inliers.begin(), inliers.end(), std::size_t{0});
  }

  double axial = 0.0;
  for (std::size_t i : inliers) axial += (pc.row(i).transpose() - best->origin).dot(best->axis.vec());
  axial /= static_cast<double>(inliers.size());

  MlesacResult out;
  out.model = *best;
  out.pose = CylinderPose::make(best->axis, best->origin + axial * best->axis.vec(), best->radius);
  out.inliers = std::move(inliers);
  out.score = best_score;
  return out;
}

ClassicalFit classical_pipeline(const PointCloud& pc, const ClassicalConfig& cfg) {
  if (pc.rows() < 16) throw Error(ErrorCode::kTooFewPoints, "classical fit needs at least 16 points");
  const NormalCloud nc = estimate_normals(pc, cfg.k_neighbors);
  const MlesacResult fit = mlesac_cylinder(pc, nc, cfg.mlesac);
  ClassicalFit out;
  out.pose = fit.pose;
  out.burial = burial_fraction_mc(fit.pose, cfg.burial_samples, cfg.burial_seed);
  out.n_inliers = fit.inliers.size();
  out.score = fit.score;
  return out;
}

}  // namespace barrel

#include <gtest/gtest.h>

#include <algorithm>

#include "barrel/geom.hpp"
#include "test_util.hpp"

using namespace barrel;
using barrel::test::random_pose;

namespace {

// Buried area fraction of a disk by midpoint integration of chord lengths.
double segment_by_integration(double r, double d, int steps = 200000) {
  double area = 0.0;
  const double dz = 2.0 * r / steps;
  for (int i = 0; i < steps; ++i) {
    const double z = -r + (i + 0.5) * dz;  // height relative to the disk center
    if (d + z <= 0.0) area += 2.0 * std::sqrt(std::max(0.0, r * r - z * z)) * dz;
  }
  return area / (std::numbers::pi * r * r);
}

// Buried volume fraction of a tilted cylinder by a deterministic quadrature in
// cylinder coordinates (area-weighted rings).
double burial_by_quadrature(const CylinderPose& cyl, int n_rho = 60, int n_phi = 120, int n_s = 120) {
  const Vec3 n = cyl.axis.vec();
  Vec3 u = n.unitOrthogonal();
  const Vec3 v = n.cross(u);
  double below = 0.0, total = 0.0;
  for (int i = 0; i < n_rho; ++i) {
    const double rho = cyl.radius * (i + 0.5) / n_rho;
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * std::numbers::pi * (j + 0.5) / n_phi;
      for (int k = 0; k < n_s; ++k) {
        const double s = -0.5 + (k + 0.5) / n_s;
        const Vec3 p = cyl.centroid + rho * (std::cos(phi) * u + std::sin(phi) * v) + s * n;
        total += rho;
        if (p.z() <= 0.0) below += rho;
      }
    }
  }
  return below / total;
}

}  // namespace

TEST(UnitAxis, NormalizesAndFlipsUp) {
  const UnitAxis a = make_unit_axis(Vec3(0.0, 3.0, -4.0));
  EXPECT_NEAR(a.vec().norm(), 1.0, 1e-15);
  EXPECT_NEAR(a.y(), -0.6, 1e-15);
  EXPECT_NEAR(a.z(), 0.8, 1e-15);
}

TEST(UnitAxis, HorizontalTieBreak) {
  EXPECT_GT(make_unit_axis(Vec3(-1.0, 2.0, 0.0)).x(), 0.0);
  EXPECT_GT(make_unit_axis(Vec3(0.0, -2.0, 0.0)).y(), 0.0);
}

TEST(UnitAxis, ZeroVectorThrows) {
  EXPECT_ERROR_CODE(make_unit_axis(Vec3::Zero()), ErrorCode::kZeroVector);
  EXPECT_ERROR_CODE(make_unit_axis(Vec3(1e-13, 0, 0)), ErrorCode::kZeroVector);
}

TEST(CylinderPose, RejectsBadRadius) {
  EXPECT_ERROR_CODE(CylinderPose::make(UnitAxis(), Vec3::Zero(), 0.0), ErrorCode::kInvalidArgument);
  EXPECT_ERROR_CODE(CylinderPose::make(UnitAxis(), Vec3::Zero(), 1.0), ErrorCode::kInvalidArgument);
  EXPECT_ERROR_CODE(CylinderPose::make(UnitAxis(), Vec3(0, 0, NAN), 0.3), ErrorCode::kInvalidArgument);
}

TEST(RigidTransform, InverseAndCompose) {
  Rng rng(3);
  RigidTransform a{Eigen::AngleAxisd(0.7, rng.unit_vector()).toRotationMatrix(), rng.in_ball(2.0)};
  RigidTransform b{Eigen::AngleAxisd(-1.3, rng.unit_vector()).toRotationMatrix(), rng.in_ball(2.0)};
  const Vec3 p(0.3, -0.2, 1.1);
  EXPECT_LT((a.inverse().apply(a.apply(p)) - p).norm(), 1e-12);
  EXPECT_LT(((a * b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
  EXPECT_TRUE((a * b).is_valid());
  RigidTransform bad = a;
  bad.rotation(0, 0) += 0.1;
  EXPECT_FALSE(bad.is_valid());
}

TEST(AxisFrame, RightHandedOrthonormal) {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const UnitAxis a = random_pose(rng).axis;
    const Mat3 f = axis_frame(a);
    EXPECT_LT((f.transpose() * f - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(f.determinant(), 1.0, 1e-12);
    EXPECT_LT((f.col(2) - a.vec()).norm(), 1e-15);
  }
}

TEST(Burial, SegmentFormulaMatchesIntegration) {
  EXPECT_NEAR(circular_segment_fraction(0.3, 0.15), 0.19550, 5e-6);
  for (double d : {-0.35, -0.3, -0.2, -0.05, 0.0, 0.1, 0.29, 0.3, 0.4})
    EXPECT_NEAR(circular_segment_fraction(0.3, d), segment_by_integration(0.3, d), 1e-5) << "d = " << d;
}

TEST(Burial, AnalyticVerticalIsClampedHeight) {
  for (double cz : {-0.7, -0.5, -0.2, 0.0, 0.13, 0.5, 0.9}) {
    const CylinderPose c = CylinderPose::make(UnitAxis(), Vec3(0.2, -0.1, cz), 0.3);
    EXPECT_NEAR(burial_fraction_analytic(c), std::clamp(0.5 - cz, 0.0, 1.0), 1e-15);
  }
}

TEST(Burial, AnalyticRejectsTilt) {
  const CylinderPose c = CylinderPose::make(make_unit_axis(Vec3(1, 0, 1)), Vec3::Zero(), 0.3);
  EXPECT_ERROR_CODE(burial_fraction_analytic(c), ErrorCode::kUnsupportedOrientation);
}

TEST(Burial, MonteCarloMatchesAnalytic) {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const double r = rng.uniform(0.2, 0.5);
    const CylinderPose vert = CylinderPose::make(UnitAxis(), Vec3(0, 0, rng.uniform(-0.6, 0.6)), r);
    const Vec3 h = Vec3(std::cos(i), std::sin(i), 0.0);
    const CylinderPose horiz = CylinderPose::make(make_unit_axis(h), Vec3(0, 0, rng.uniform(-r, r)), r);
    for (const CylinderPose& c : {vert, horiz}) {
      const BurialResult mc = burial_fraction_mc(c, 200000, 100 + i);
      EXPECT_EQ(mc.n_samples, 200000u);
      EXPECT_NEAR(mc.fraction, static_cast<double>(mc.n_below) / mc.n_samples, 1e-15);
      EXPECT_NEAR(mc.fraction, burial_fraction_analytic(c), 0.005);
    }
  }
}

TEST(Burial, MonteCarloMatchesQuadratureWhenTilted) {
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const CylinderPose c = random_pose(rng);
    const double mc = burial_fraction_mc(c, 200000, i).fraction;
    EXPECT_NEAR(mc, burial_by_quadrature(c), 0.006);
  }
}

TEST(Burial, DeterministicAndMonotone) {
  const UnitAxis a = make_unit_axis(Vec3(0.3, 0.4, 0.8));
  EXPECT_EQ(burial_fraction_mc(CylinderPose::make(a, Vec3(0, 0, 0.1), 0.3), 5000, 9).n_below,
            burial_fraction_mc(CylinderPose::make(a, Vec3(0, 0, 0.1), 0.3), 5000, 9).n_below);
  double prev = 1.0;
  for (double cz = -0.8; cz <= 0.8; cz += 0.1) {
    const double f = burial_fraction_mc(CylinderPose::make(a, Vec3(0, 0, cz), 0.3), 20000, 9).fraction;
    EXPECT_LE(f, prev);
    EXPECT_GE(f, 0.0);
    prev = f;
  }
  EXPECT_EQ(burial_fraction_mc(CylinderPose::make(a, Vec3(0, 0, 2.0), 0.3), 1000).fraction, 0.0);
  EXPECT_EQ(burial_fraction_mc(CylinderPose::make(a, Vec3(0, 0, -2.0), 0.3), 1000).fraction, 1.0);
}

TEST(Burial, ZeroSamplesRejected) {
  EXPECT_ERROR_CODE(burial_fraction_mc(CylinderPose{}, 0), ErrorCode::kInvalidArgument);
}

TEST(SurfaceSample, PointsLieOnTheSurface) {
  Rng rng(21);
  const CylinderPose c = random_pose(rng);
  const SurfaceSample s = sample_cylinder_surface_with_normals(c, 3000, 500, 4);
  ASSERT_EQ(s.points.rows(), 4000);
  for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
    const Vec3 p = s.points.row(i).transpose();
    const Vec3 n = s.normals.row(i).transpose();
    EXPECT_NEAR(n.norm(), 1.0, 1e-12);
    const double axial = axial_offset(c, p);
    const double radial = distance_to_axis(c, p);
    if (i < 3000) {
      EXPECT_NEAR(radial, c.radius, 1e-12);
      EXPECT_LE(std::abs(axial), 0.5 + 1e-12);
      EXPECT_NEAR(std::abs(n.dot(c.axis.vec())), 0.0, 1e-12);
    } else {
      EXPECT_NEAR(std::abs(axial), 0.5, 1e-12);
      EXPECT_LE(radial, c.radius + 1e-12);
      EXPECT_NEAR(n.dot(c.axis.vec()), axial > 0 ? 1.0 : -1.0, 1e-12);
    }
  }
}

TEST(SurfaceSample, AreaUniform) {
  const CylinderPose c = CylinderPose::make(UnitAxis(), Vec3::Zero(), 0.4);
  const PointCloud p = sample_cylinder_surface(c, 5000, 5000, 17);
  std::vector<double> axial, cap_area;
  for (Eigen::Index i = 0; i < 5000; ++i) axial.push_back(p(i, 2) + 0.5);
  for (Eigen::Index i = 5000; i < 10000; ++i) cap_area.push_back(p.row(i).head<2>().squaredNorm() / (0.4 * 0.4));
  // 1% critical value of the one-sample KS statistic.
  const double crit = 1.63 / std::sqrt(5000.0);
  EXPECT_LT(test::ks_uniform(axial), crit);
  EXPECT_LT(test::ks_uniform(cap_area), crit);
}

TEST(Geometry, CloudHelpers) {
  PointCloud pc(3, 3);
  pc << 0, 0, 0, 2, 0, 0, 1, 3, 0;
  EXPECT_LT((cloud_mean(pc) - Vec3(1, 1, 0)).norm(), 1e-15);
  EXPECT_ERROR_CODE(cloud_mean(PointCloud(0, 3)), ErrorCode::kEmptyCloud);
  const PointCloud s = select_rows(pc, {2, 0});
  EXPECT_EQ(s.row(0), pc.row(2));
  EXPECT_EQ(s.row(1), pc.row(0));
  EXPECT_NEAR(cosine_similarity(Vec3(1, 0, 0), Vec3(-2, 0, 0)), 1.0, 1e-15);
}

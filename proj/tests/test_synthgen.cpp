#include <gtest/gtest.h>

#include <map>
#include <set>

#include "barrel/synthgen.hpp"
#include "test_util.hpp"

using namespace barrel;

namespace {

bool strictly_inside(const CylinderPose& c, const Vec3& p, double eps) {
  return p.z() > eps && distance_to_axis(c, p) < c.radius - eps && std::abs(axial_offset(c, p)) < 0.5 - eps;
}

// True when the open segment from the camera to p passes through the solid
// (floor-clipped) cylinder or under the floor.
bool occluded(const CylinderPose& c, const Vec3& cam, const Vec3& p) {
  const int steps = 4000;
  for (int k = 1; k < steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    if (t > 1.0 - 2e-3) break;
    const Vec3 q = cam + t * (p - cam);
    if (strictly_inside(c, q, 1e-6) || q.z() < -1e-9) return true;
  }
  return false;
}

CameraView test_camera(const Vec3& center, const Vec3& target, int res = 96) {
  return look_at(center, target, res, res, focal_from_fov(res, 50.0));
}

}  // namespace

TEST(Camera, ProjectsPixelRaysBack) {
  const CameraView cam = test_camera(Vec3(3, 1, 2), Vec3(0, 0, 0.3));
  EXPECT_TRUE(cam.is_valid());
  for (int i : {0, 17, 50, 95})
    for (int j : {0, 40, 95}) {
      const Vec3 p = cam.center() + 2.5 * cam.pixel_ray(i, j);
      const auto hit = cam.project(p);
      ASSERT_TRUE(hit.has_value());
      EXPECT_EQ(hit->pixel, j * 96 + i);
    }
  EXPECT_FALSE(cam.project(cam.center() - cam.pixel_ray(48, 48)).has_value());
}

TEST(Camera, TransformMovesWithScene) {
  const CameraView cam = test_camera(Vec3(3, 1, 2), Vec3(0, 0, 0.3));
  const RigidTransform t{Eigen::AngleAxisd(0.8, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3(0.5, -1, 2)};
  const CameraView moved = transform_camera(cam, t);
  const Vec3 p(0.1, 0.2, 0.3);
  EXPECT_LT((moved.to_camera(t.apply(p)) - cam.to_camera(p)).norm(), 1e-12);
}

TEST(Synthgen, FocalFromFov) {
  EXPECT_NEAR(focal_from_fov(128, 90.0), 64.0, 1e-12);
}

TEST(Synthgen, SamplePoseRespectsConfig) {
  GenConfig cfg;
  cfg.axis_min_z = 0.3;
  Rng rng(4);
  for (int i = 0; i < 60; ++i) {
    const CylinderPose c = sample_pose(rng, cfg);
    EXPECT_GE(c.axis.z(), 0.3 - 1e-12);
    EXPECT_GE(c.radius, cfg.radius_range.lo);
    EXPECT_LE(c.radius, cfg.radius_range.hi);
    EXPECT_LE(std::abs(c.centroid.x()), cfg.centroid_xy_extent);
    const double b = burial_fraction_mc(c, kDefaultBurialSamples, kPlacementSeed).fraction;
    EXPECT_GE(b, cfg.burial_range.lo - 0.005);
    EXPECT_LE(b, cfg.burial_range.hi + 0.005);
  }
}

TEST(Synthgen, AxisZIsUniformOnTheCap) {
  GenConfig cfg;
  Rng rng(12);
  std::vector<double> nz;
  for (int i = 0; i < 400; ++i) nz.push_back(sample_pose(rng, cfg).axis.z());
  EXPECT_LT(test::ks_uniform(nz), 1.63 / std::sqrt(400.0));
}

TEST(Synthgen, PlaceAtBurialHitsTarget) {
  Rng rng(31);
  for (int i = 0; i < 15; ++i) {
    Vec3 v = rng.unit_vector();
    v.z() = std::abs(v.z());
    const double target = rng.uniform(0.05, 0.85);
    const CylinderPose c = place_at_burial(make_unit_axis(v), rng.uniform(0.2, 0.5), 0.1, -0.2, target);
    // Independent stream with 10x the samples.
    EXPECT_NEAR(burial_fraction_mc(c, 1000000, 999 + i).fraction, target, 0.0065);
  }
  EXPECT_ERROR_CODE(place_at_burial(UnitAxis(), 0.3, 0, 0, 1.2), ErrorCode::kInvalidArgument);
}

TEST(Render, VisiblePointsAreOnTheSurfaceAboveTheFloorAndUnoccluded) {
  Rng rng(77);
  for (int trial = 0; trial < 4; ++trial) {
    GenConfig cfg;
    const CylinderPose c = sample_pose(rng, cfg);
    const CameraView cam = sample_camera(rng, cfg, Vec3(c.centroid.x(), c.centroid.y(), 0.25));
    const Rendered r = render_visible(c, cam);
    ASSERT_GT(r.points.rows(), 50);
    EXPECT_LE(r.points.rows(), 128 * 128);
    std::set<int> pixels(r.pixels.begin(), r.pixels.end());
    EXPECT_EQ(pixels.size(), r.pixels.size());
    EXPECT_TRUE(std::is_sorted(r.pixels.begin(), r.pixels.end()));
    for (Eigen::Index i = 0; i < r.points.rows(); i += 7) {
      const Vec3 p = r.points.row(i).transpose();
      EXPECT_GE(p.z(), 0.0);
      const bool lateral = std::abs(distance_to_axis(c, p) - c.radius) < 1e-9;
      const bool cap = std::abs(std::abs(axial_offset(c, p)) - 0.5) < 1e-9;
      EXPECT_TRUE(lateral || cap);
      EXPECT_FALSE(occluded(c, cam.center(), p)) << "point " << i;
      EXPECT_EQ(cam.project(p)->pixel, r.pixels[i]);
    }
  }
}

TEST(Render, VerticalFromAboveSeesNoBottomCap) {
  const CylinderPose c = CylinderPose::make(UnitAxis(), Vec3(0, 0, 0.2), 0.3);
  const PointCloud pts = render_visible_points(c, test_camera(Vec3(0.5, 0.3, 3.0), Vec3(0, 0, 0.3)));
  std::size_t top = 0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    EXPECT_GT(pts(i, 2), 0.0);
    EXPECT_GT(pts(i, 2), 0.2 - 0.5 + 1e-6);
    top += std::abs(pts(i, 2) - 0.7) < 1e-12 ? 1 : 0;
  }
  EXPECT_GT(top, pts.rows() / 2);
}

TEST(Render, MatchesExactRaycastSilhouette) {
  const CylinderPose c = CylinderPose::make(make_unit_axis(Vec3(0.5, 0.2, 0.8)), Vec3(0.1, 0, 0.15), 0.35);
  const CameraView cam = test_camera(Vec3(2.5, -1.5, 1.8), Vec3(0.1, 0, 0.25));
  const Rendered r = render_visible(c, cam);
  const std::vector<RaycastPixel> ray = raycast_scene(c, cam);
  const auto is_barrel = [&](int i, int j) {
    return i >= 0 && j >= 0 && i < cam.width && j < cam.height && ray[static_cast<std::size_t>(j) * cam.width + i].barrel;
  };
  std::size_t barrel = 0, agree = 0;
  for (const RaycastPixel& px : ray) barrel += px.barrel ? 1 : 0;
  for (std::size_t k = 0; k < r.pixels.size(); ++k) {
    const int i = static_cast<int>(r.pixels[k] % cam.width), j = static_cast<int>(r.pixels[k] / cam.width);
    if (!is_barrel(i, j)) {
      // Splatted samples may land in a silhouette pixel whose center ray misses.
      bool edge = false;
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) edge = edge || is_barrel(i + di, j + dj);
      EXPECT_TRUE(edge) << "pixel " << i << "," << j;
      continue;
    }
    ++agree;
    if (is_barrel(i - 1, j) && is_barrel(i + 1, j) && is_barrel(i, j - 1) && is_barrel(i, j + 1))
      EXPECT_NEAR(ray[r.pixels[k]].depth, r.depths[k], 0.05) << "pixel " << i << "," << j;
  }
  EXPECT_GT(static_cast<double>(agree), 0.85 * static_cast<double>(r.pixels.size()));
  EXPECT_GT(static_cast<double>(r.pixels.size()), 0.9 * static_cast<double>(barrel));
}

TEST(Render, ZBufferVisibleMatchesBruteForce) {
  const CylinderPose c = CylinderPose::make(make_unit_axis(Vec3(0.3, 0.1, 0.9)), Vec3(0, 0, 0.3), 0.3);
  PointCloud pc = sample_cylinder_surface(c, 3000, 500, 4);
  pc.row(7) = pc.row(3);  // exact tie: the lower row wins
  const CameraView cam = test_camera(Vec3(2.0, 1.0, 1.5), Vec3(0, 0, 0.3));
  const std::vector<std::size_t> rows = zbuffer_visible(pc, cam);
  std::map<int, std::pair<double, std::size_t>> best;
  for (Eigen::Index i = 0; i < pc.rows(); ++i) {
    const auto hit = cam.project(pc.row(i).transpose());
    if (!hit) continue;
    const auto it = best.find(hit->pixel);
    if (it == best.end() || hit->depth < it->second.first) best[hit->pixel] = {hit->depth, static_cast<std::size_t>(i)};
  }
  std::vector<std::size_t> expected;
  for (const auto& [pixel, v] : best) expected.push_back(v.second);
  EXPECT_EQ(rows, expected);
  EXPECT_EQ(std::count(rows.begin(), rows.end(), 7u), 0);
  EXPECT_TRUE(zbuffer_visible(PointCloud(0, 3), cam).empty());
}

TEST(Render, FullyBuriedIsEmpty) {
  const CylinderPose c = CylinderPose::make(UnitAxis(), Vec3(0, 0, -0.6), 0.3);
  EXPECT_ERROR_CODE(render_visible(c, test_camera(Vec3(2, 0, 2), Vec3::Zero())), ErrorCode::kEmptyRender);
}

TEST(Dataset, DeterministicAndPrefixStable) {
  GenConfig cfg;
  cfg.n_cylinders = 3;
  cfg.views_per_cylinder = 2;
  cfg.seed = 42;
  const auto a = generate_dataset(cfg);
  const auto b = generate_dataset(cfg);
  cfg.n_cylinders = 5;
  const auto c = generate_dataset(cfg);
  ASSERT_EQ(a.size(), 6u);
  ASSERT_EQ(c.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].cloud, b[i].cloud);
    EXPECT_EQ(a[i].cloud, c[i].cloud);
    EXPECT_EQ(a[i].cyl_id, i / 2);
    EXPECT_EQ(a[i].view_id, i % 2);
    EXPECT_GE(a[i].cloud.rows(), 64);
    EXPECT_NEAR(a[i].burial_truth, burial_fraction_mc(a[i].truth, kDefaultBurialSamples, kPlacementSeed).fraction, 0.0);
  }
  // Views of one cylinder share the pose.
  EXPECT_EQ(a[0].truth.centroid, a[1].truth.centroid);
  EXPECT_NE(a[0].camera.extrinsics.translation, a[1].camera.extrinsics.translation);
}

TEST(Dataset, JitterKeepsPointsAboveFloor) {
  GenConfig cfg;
  cfg.n_cylinders = 2;
  cfg.views_per_cylinder = 1;
  cfg.jitter_sigma = 0.02;
  cfg.seed = 9;
  const auto noisy = generate_dataset(cfg);
  cfg.jitter_sigma = 0.0;
  const auto clean = generate_dataset(cfg);
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    EXPECT_GE(noisy[i].cloud.col(2).minCoeff(), 0.0);
    double rms = 0.0;
    std::size_t lateral = 0;
    for (Eigen::Index k = 0; k < noisy[i].cloud.rows(); ++k) {
      const Vec3 p = noisy[i].cloud.row(k).transpose();
      if (std::abs(axial_offset(noisy[i].truth, p)) > 0.4) continue;
      rms += std::pow(distance_to_axis(noisy[i].truth, p) - noisy[i].truth.radius, 2);
      ++lateral;
    }
    ASSERT_GT(lateral, 20u);
    rms = std::sqrt(rms / static_cast<double>(lateral));
    EXPECT_GT(rms, 0.005);
    EXPECT_LT(rms, 0.05);
    EXPECT_EQ(noisy[i].truth.centroid, clean[i].truth.centroid);
  }
}

TEST(Dataset, ConfigValidation) {
  GenConfig cfg;
  cfg.radius_range = {0.5, 0.2};
  EXPECT_ERROR_CODE(cfg.validate(), ErrorCode::kInvalidArgument);
  cfg = GenConfig{};
  cfg.axis_min_z = 1.5;
  EXPECT_ERROR_CODE(cfg.validate(), ErrorCode::kInvalidArgument);
}

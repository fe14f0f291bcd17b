#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "barrel/io.hpp"
#include "barrel/synthgen.hpp"
#include "test_util.hpp"

using namespace barrel;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "barrel_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PointCloud random_cloud(std::uint64_t seed, Eigen::Index n) {
  Rng rng(seed);
  PointCloud pc(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) pc.row(i) = (rng.in_ball(50.0)).transpose();
  return pc;
}

void expect_float_equal(const PointCloud& a, const PointCloud& b) {
  ASSERT_EQ(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (int k = 0; k < 3; ++k) {
      const double tol = std::numeric_limits<float>::epsilon() * std::max(1.0, std::abs(a(i, k)));
      EXPECT_LE(std::abs(a(i, k) - b(i, k)), tol);
    }
}

}  // namespace

TEST(Ply, RoundTripBothFormats) {
  const PointCloud pc = random_cloud(1, 1000);
  for (PlyFormat f : {PlyFormat::kAscii, PlyFormat::kBinaryLittleEndian}) {
    const PointCloud back = parse_ply(serialize_ply(pc, f));
    expect_float_equal(pc, back);
    // The float values survive a second trip bit for bit.
    EXPECT_EQ(parse_ply(serialize_ply(back, f)), back);
  }
  const fs::path dir = temp_dir("ply");
  write_ply((dir / "a.ply").string(), pc);
  expect_float_equal(pc, read_ply((dir / "a.ply").string()));
}

TEST(Ply, ExtraPropertiesAndElements) {
  const std::string text =
      "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty uchar red\nproperty double x\n"
      "property float y\nproperty float z\nproperty list uchar int junk\nelement face 1\n"
      "property list uchar int vertex_indices\nend_header\n"
      "255 1.5 2 3 2 7 8\n0 -1 -2 -3.25 0\n3 0 1 1\n";
  const PointCloud pc = parse_ply(text);
  ASSERT_EQ(pc.rows(), 2);
  EXPECT_EQ(pc.row(0), Eigen::RowVector3d(1.5, 2, 3));
  EXPECT_EQ(pc.row(1), Eigen::RowVector3d(-1, -2, -3.25));
}

TEST(Ply, BinaryWithColor) {
  std::string bytes = "ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                      "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  const float xyz[3] = {0.5f, -1.25f, 3.0f};
  bytes.append(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  bytes += "\x01\x02\x03";
  const PointCloud pc = parse_ply(bytes);
  EXPECT_EQ(pc.row(0), Eigen::RowVector3d(0.5, -1.25, 3.0));
}

TEST(Ply, Malformed) {
  const std::string good = serialize_ply(random_cloud(2, 10), PlyFormat::kBinaryLittleEndian);
  EXPECT_ERROR_CODE(parse_ply(good.substr(0, good.size() - 5)), ErrorCode::kMalformedPly);
  EXPECT_ERROR_CODE(parse_ply("plx\n"), ErrorCode::kMalformedPly);
  EXPECT_ERROR_CODE(parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n"),
                    ErrorCode::kMalformedPly);
  EXPECT_ERROR_CODE(parse_ply("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                              "property float z\nend_header\n1 2 3\n4 5\n"),
                    ErrorCode::kMalformedPly);
  EXPECT_ERROR_CODE(parse_ply("ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n"),
                    ErrorCode::kMalformedPly);
  try {
    parse_ply("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
              "property float z\nend_header\n1 2 3\n4 5 nope\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 9"), std::string::npos) << e.what();
  }
  EXPECT_ERROR_CODE(serialize_ply(PointCloud(0, 3), PlyFormat::kAscii), ErrorCode::kInvalidArgument);
  EXPECT_ERROR_CODE(read_ply("/nonexistent/x.ply"), ErrorCode::kIoError);
}

TEST(Mask, PngAndPgmRoundTrip) {
  Rng rng(3);
  BinaryMask m = BinaryMask::filled(37, 21, false);
  for (auto& b : m.bits) b = rng.uniform() < 0.4 ? 1 : 0;
  const fs::path dir = temp_dir("mask");
  for (const char* name : {"m.png", "m.pgm"}) {
    write_mask((dir / name).string(), m);
    EXPECT_EQ(read_mask((dir / name).string()), m);
  }
  {
    std::ofstream out(dir / "ascii.pgm");
    out << "P2\n# comment\n3 2\n255\n0 7 0\n255 0 1\n";
  }
  const BinaryMask a = read_mask((dir / "ascii.pgm").string());
  EXPECT_EQ(a.bits, (std::vector<std::uint8_t>{0, 1, 0, 1, 0, 1}));
}

TEST(Json, PoseCameraTransformRoundTrip) {
  const CylinderPose pose = CylinderPose::make(make_unit_axis(Vec3(0.1, 0.2, 0.3)), Vec3(1.0 / 3.0, -2e-7, 0.1), 0.377);
  const CylinderPose back = pose_from_json(nlohmann::json::parse(to_json(pose).dump()));
  // The axis is renormalized on the way in.
  EXPECT_LT((back.axis.vec() - pose.axis.vec()).norm(), 1e-15);
  EXPECT_EQ(back.centroid, pose.centroid);
  EXPECT_EQ(back.radius, pose.radius);

  const CameraView cam = look_at(Vec3(1, 2, 3), Vec3::Zero(), 64, 48, 77.5);
  const CameraView cb = camera_from_json(nlohmann::json::parse(to_json(cam).dump()));
  EXPECT_EQ(cb.extrinsics.rotation, cam.extrinsics.rotation);
  EXPECT_EQ(cb.extrinsics.translation, cam.extrinsics.translation);
  EXPECT_EQ(cb.principal_point, cam.principal_point);
  EXPECT_EQ(cb.width, 64);

  EXPECT_ERROR_CODE(pose_from_json(nlohmann::json{{"axis", {0, 0, 1}}}), ErrorCode::kSchemaError);
  EXPECT_ERROR_CODE(read_json("/nonexistent.json"), ErrorCode::kSchemaError);
}

TEST(Json, FormatDoubleRoundTrips) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(ScenePackageIo, RoundTripAndMissingViews) {
  const CylinderPose truth = CylinderPose::make(UnitAxis(), Vec3(0, 0, 0.2), 0.3);
  std::vector<CameraView> views{look_at(Vec3(2, 1, 2), Vec3(0, 0, 0.2), 64, 64, 70.0),
                                look_at(Vec3(-2, 1, 1.5), Vec3(0, 0, 0.2), 64, 64, 70.0)};
  const SyntheticScene s = synthesize_scene(truth, views, RigidTransform::identity());
  const fs::path dir = temp_dir("scene");
  write_scene_package(dir.string(), s.package);
  const ScenePackage back = read_scene_package(dir.string());
  ASSERT_EQ(back.views.size(), 2u);
  EXPECT_EQ(back.masks[1], s.package.masks[1]);
  EXPECT_EQ(back.bboxes[0].center, s.package.bboxes[0].center);
  EXPECT_EQ(back.bboxes[0].half_extent, s.package.bboxes[0].half_extent);
  expect_float_equal(s.package.full_cloud, back.full_cloud);
  EXPECT_LT((back.views[0].extrinsics.rotation - views[0].extrinsics.rotation).norm(), 1e-15);

  fs::remove(dir / "views.json");
  EXPECT_ERROR_CODE(read_scene_package(dir.string()), ErrorCode::kSchemaError);
}

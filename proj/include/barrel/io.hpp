#pragma once

#include <string>

#include "json.hpp"

#include "barrel/camera.hpp"
#include "barrel/geom.hpp"
#include "barrel/scene.hpp"

namespace barrel {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

/// Reads the x/y/z properties of the vertex element; other properties and
/// elements (including list properties) are skipped. Throws MalformedPly.
PointCloud read_ply(const std::string& path);
PointCloud parse_ply(const std::string& bytes, const std::string& source_name = "<memory>");

/// float32 x/y/z vertices. Throws InvalidArgument for an empty cloud.
void write_ply(const std::string& path, const PointCloud& pc, PlyFormat format = PlyFormat::kBinaryLittleEndian);
std::string serialize_ply(const PointCloud& pc, PlyFormat format);

/// PGM (P2/P5) or PNG by extension; nonzero pixels are true.
BinaryMask read_mask(const std::string& path);
void write_mask(const std::string& path, const BinaryMask& mask);

nlohmann::json to_json(const Vec3& v);
Vec3 vec3_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CylinderPose& pose);
CylinderPose pose_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CameraView& cam);
CameraView camera_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RigidTransform& t);
RigidTransform transform_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::string& path);
void write_json(const std::string& path, const nlohmann::json& j);

/// Scene directory layout: scene.ply, views.json, bboxes.json and one mask
/// image per view (file named by the view's "mask" entry).
ScenePackage read_scene_package(const std::string& dir);
void write_scene_package(const std::string& dir, const ScenePackage& pkg);

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

}  // namespace barrel

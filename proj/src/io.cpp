#include "barrel/io.hpp"

#include <png.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "barrel/error.hpp"

namespace barrel {

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

// ---------------------------------------------------------------- PLY

enum class PlyType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

std::optional<PlyType> ply_type(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::kInt8;
  if (name == "uchar" || name == "uint8") return PlyType::kUint8;
  if (name == "short" || name == "int16") return PlyType::kInt16;
  if (name == "ushort" || name == "uint16") return PlyType::kUint16;
  if (name == "int" || name == "int32") return PlyType::kInt32;
  if (name == "uint" || name == "uint32") return PlyType::kUint32;
  if (name == "float" || name == "float32") return PlyType::kFloat32;
  if (name == "double" || name == "float64") return PlyType::kFloat64;
  return std::nullopt;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUint8: return 1;
    case PlyType::kInt16:
    case PlyType::kUint16: return 2;
    case PlyType::kInt32:
    case PlyType::kUint32:
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
  bool is_list = false;
  PlyType count_type = PlyType::kUint8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

[[noreturn]] void ply_fail(const std::string& source, const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kMalformedPly, source + " (" + where + "): " + what);
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

double decode(PlyType t, const char* p) {
  switch (t) {
    case PlyType::kInt8: return load_le<std::int8_t>(p);
    case PlyType::kUint8: return load_le<std::uint8_t>(p);
    case PlyType::kInt16: return load_le<std::int16_t>(p);
    case PlyType::kUint16: return load_le<std::uint16_t>(p);
    case PlyType::kInt32: return load_le<std::int32_t>(p);
    case PlyType::kUint32: return load_le<std::uint32_t>(p);
    case PlyType::kFloat32: return load_le<float>(p);
    case PlyType::kFloat64: return load_le<double>(p);
  }
  return 0.0;
}

}  // namespace

PointCloud parse_ply(const std::string& bytes, const std::string& source) {
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= bytes.size()) return std::nullopt;
    const std::size_t nl = bytes.find('\n', pos);
    std::string line = bytes.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? bytes.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  auto where = [&] { return "line " + std::to_string(line_no); };

  auto magic = next_line();
  if (!magic || *magic != "ply") ply_fail(source, "line 1", "missing 'ply' magic");
  bool binary = false, have_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    auto line = next_line();
    if (!line) ply_fail(source, where(), "header ends without end_header");
    std::istringstream ls(*line);
    std::string kw;
    ls >> kw;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        ply_fail(source, where(), "unsupported format '" + fmt + "'");
      have_format = true;
    } else if (kw == "element") {
      PlyElement e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0) ply_fail(source, where(), "bad element declaration");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (elements.empty()) ply_fail(source, where(), "property before any element");
      std::string t;
      ls >> t;
      PlyProperty p;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        const auto c = ply_type(ct), i = ply_type(it);
        if (!c || !i || p.name.empty()) ply_fail(source, where(), "bad list property");
        p.is_list = true;
        p.count_type = *c;
        p.type = *i;
      } else {
        const auto ty = ply_type(t);
        ls >> p.name;
        if (!ty || p.name.empty()) ply_fail(source, where(), "bad property '" + t + "'");
        p.type = *ty;
      }
      elements.back().props.push_back(std::move(p));
    } else {
      ply_fail(source, where(), "unknown header keyword '" + kw + "'");
    }
  }
  if (!have_format) ply_fail(source, where(), "missing format line");

  const PlyElement* vertex = nullptr;
  for (const auto& e : elements)
    if (e.name == "vertex") vertex = &e;
  if (!vertex) ply_fail(source, where(), "no vertex element");
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t k = 0; k < vertex->props.size(); ++k) {
    const auto& p = vertex->props[k];
    if (p.is_list) continue;
    if (p.name == "x") ix = static_cast<int>(k);
    if (p.name == "y") iy = static_cast<int>(k);
    if (p.name == "z") iz = static_cast<int>(k);
  }
  if (ix < 0 || iy < 0 || iz < 0) ply_fail(source, where(), "vertex element lacks x/y/z");

  PointCloud out(static_cast<Eigen::Index>(vertex->count), 3);
  std::vector<double> values;

  if (binary) {
    auto need = [&](std::size_t n, const std::string& what) {
      if (pos + n > bytes.size())
        ply_fail(source, "byte offset " + std::to_string(pos), "truncated payload while reading " + what);
    };
    for (const auto& e : elements) {
      for (std::size_t r = 0; r < e.count; ++r) {
        values.assign(e.props.size(), 0.0);
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          const auto& p = e.props[k];
          if (p.is_list) {
            need(ply_size(p.count_type), e.name + "." + p.name);
            const double n = decode(p.count_type, bytes.data() + pos);
            pos += ply_size(p.count_type);
            if (n < 0) ply_fail(source, "byte offset " + std::to_string(pos), "negative list length");
            const std::size_t len = static_cast<std::size_t>(n) * ply_size(p.type);
            need(len, e.name + "." + p.name);
            pos += len;
          } else {
            need(ply_size(p.type), e.name + "." + p.name);
            values[k] = decode(p.type, bytes.data() + pos);
            pos += ply_size(p.type);
          }
        }
        if (&e == vertex) out.row(static_cast<Eigen::Index>(r)) << values[ix], values[iy], values[iz];
      }
    }
  } else {
    // Whitespace-separated tokens; line numbers kept for diagnostics.
    auto next_token = [&]() -> std::optional<std::string_view> {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        if (bytes[pos] == '\n') ++line_no;
        ++pos;
      }
      if (pos >= bytes.size()) return std::nullopt;
      const std::size_t start = pos;
      while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      return std::string_view(bytes).substr(start, pos - start);
    };
    auto number = [&](const std::string& what) {
      const auto tok = next_token();
      if (!tok) ply_fail(source, "line " + std::to_string(line_no + 1), "unexpected end of data reading " + what);
      double v = 0.0;
      const auto res = std::from_chars(tok->data(), tok->data() + tok->size(), v);
      if (res.ec != std::errc() || res.ptr != tok->data() + tok->size())
        ply_fail(source, "line " + std::to_string(line_no + 1), "bad number '" + std::string(*tok) + "' for " + what);
      return v;
    };
    for (const auto& e : elements) {
      for (std::size_t r = 0; r < e.count; ++r) {
        values.assign(e.props.size(), 0.0);
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          const auto& p = e.props[k];
          if (p.is_list) {
            const double n = number(e.name + "." + p.name + " length");
            for (long long m = 0; m < static_cast<long long>(n); ++m) number(e.name + "." + p.name);
          } else {
            values[k] = number(e.name + "." + p.name);
          }
        }
        if (&e == vertex) out.row(static_cast<Eigen::Index>(r)) << values[ix], values[iy], values[iz];
      }
    }
  }
  if (!out.allFinite()) ply_fail(source, "vertex data", "non-finite coordinate");
  return out;
}

PointCloud read_ply(const std::string& path) { return parse_ply(slurp(path), path); }

std::string serialize_ply(const PointCloud& pc, PlyFormat format) {
  if (pc.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "refusing to write an empty cloud");
  std::ostringstream os;
  os << "ply\nformat " << (format == PlyFormat::kAscii ? "ascii" : "binary_little_endian") << " 1.0\n"
     << "element vertex " << pc.rows() << "\n"
     << "property float x\nproperty float y\nproperty float z\nend_header\n";
  std::string out = os.str();
  char buf[32];
  for (Eigen::Index i = 0; i < pc.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const float f = static_cast<float>(pc(i, c));
      if (format == PlyFormat::kAscii) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), f);
        out.append(buf, res.ptr);
        out.push_back(c == 2 ? '\n' : ' ');
      } else {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        out.append(reinterpret_cast<const char*>(&bits), 4);
      }
    }
  }
  return out;
}

void write_ply(const std::string& path, const PointCloud& pc, PlyFormat format) {
  spit(path, serialize_ply(pc, format));
}

// ---------------------------------------------------------------- masks

namespace {

bool has_extension(const std::string& path, const char* ext) {
  std::string e = fs::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

BinaryMask read_pgm(const std::string& path) {
  const std::string bytes = slurp(path);
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  const std::string magic = token();
  if (magic != "P2" && magic != "P5") throw Error(ErrorCode::kSchemaError, path + ": not a PGM file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::kSchemaError, path + ": bad PGM header");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw Error(ErrorCode::kSchemaError, path + ": bad PGM header");
  BinaryMask m = BinaryMask::filled(w, h, false);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    if (pos + n * bpp > bytes.size()) throw Error(ErrorCode::kSchemaError, path + ": truncated PGM payload");
    for (std::size_t i = 0; i < n; ++i) {
      bool on = bytes[pos + i * bpp] != 0;
      if (bpp == 2) on = on || bytes[pos + i * bpp + 1] != 0;
      m.bits[i] = on ? 1 : 0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string t = token();
      if (t.empty()) throw Error(ErrorCode::kSchemaError, path + ": truncated PGM payload");
      m.bits[i] = std::stoi(t) != 0 ? 1 : 0;
    }
  }
  return m;
}

BinaryMask read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error(ErrorCode::kSchemaError, path + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::kSchemaError, path + ": " + image.message);
  }
  BinaryMask m = BinaryMask::filled(static_cast<int>(image.width), static_cast<int>(image.height), false);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = buffer[i] != 0 ? 1 : 0;
  return m;
}

}  // namespace

BinaryMask read_mask(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kSchemaError, "missing mask " + path);
  if (has_extension(path, ".png")) return read_png(path);
  if (has_extension(path, ".pgm")) return read_pgm(path);
  throw Error(ErrorCode::kSchemaError, path + ": masks must be .png or .pgm");
}

void write_mask(const std::string& path, const BinaryMask& mask) {
  std::vector<png_byte> pixels(mask.bits.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = mask.bits[i] ? 255 : 0;
  if (has_extension(path, ".png")) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(mask.width);
    image.height = static_cast<png_uint_32>(mask.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr))
      throw Error(ErrorCode::kIoError, path + ": " + image.message);
    return;
  }
  if (!has_extension(path, ".pgm")) throw Error(ErrorCode::kInvalidArgument, path + ": masks must be .png or .pgm");
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  spit(path, out);
}

// ---------------------------------------------------------------- JSON

nlohmann::json to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kSchemaError, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json to_json(const CylinderPose& pose) {
  return {{"axis", to_json(pose.axis.vec())},
          {"centroid", to_json(pose.centroid)},
          {"radius", pose.radius},
          {"height", pose.height}};
}

CylinderPose pose_from_json(const nlohmann::json& j) {
  try {
    CylinderPose p = CylinderPose::make(make_unit_axis(vec3_from_json(j.at("axis"))), vec3_from_json(j.at("centroid")),
                                        j.at("radius").get<double>());
    if (j.contains("height") && j.at("height").get<double>() != 1.0)
      throw Error(ErrorCode::kSchemaError, "cylinder height must be 1");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad pose: ") + e.what());
  }
}

nlohmann::json to_json(const RigidTransform& t) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  return {{"rotation", rot}, {"translation", to_json(t.translation)}};
}

RigidTransform transform_from_json(const nlohmann::json& j) {
  try {
    const auto& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 9) throw Error(ErrorCode::kSchemaError, "rotation must have 9 entries");
    RigidTransform t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot[r * 3 + c].get<double>();
    t.translation = vec3_from_json(j.at("translation"));
    if (!t.is_valid(1e-6)) throw Error(ErrorCode::kSchemaError, "rotation is not orthonormal");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad transform: ") + e.what());
  }
}

nlohmann::json to_json(const CameraView& cam) {
  nlohmann::json j = to_json(cam.extrinsics);
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["focal"] = cam.focal;
  j["principal_point"] = {cam.principal_point.x(), cam.principal_point.y()};
  return j;
}

CameraView camera_from_json(const nlohmann::json& j) {
  try {
    CameraView cam;
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.focal = j.at("focal").get<double>();
    const auto& pp = j.at("principal_point");
    cam.principal_point = {pp.at(0).get<double>(), pp.at(1).get<double>()};
    cam.extrinsics = transform_from_json(j);
    if (!cam.is_valid()) throw Error(ErrorCode::kSchemaError, "invalid camera parameters");
    return cam;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad camera: ") + e.what());
  }
}

nlohmann::json read_json(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kSchemaError, "missing " + path);
  try {
    return nlohmann::json::parse(slurp(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, path + ": " + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) { spit(path, j.dump(2) + "\n"); }

namespace {

void require_schema(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("schema_version") || !j.at("schema_version").is_number_integer())
    throw Error(ErrorCode::kSchemaError, what + ": missing integer schema_version");
  if (j.at("schema_version").get<int>() != 1)
    throw Error(ErrorCode::kSchemaError, what + ": unsupported schema_version");
}

}  // namespace

ScenePackage read_scene_package(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error(ErrorCode::kSchemaError, dir + " is not a directory");
  const nlohmann::json views = read_json((root / "views.json").string());
  const nlohmann::json boxes = read_json((root / "bboxes.json").string());
  require_schema(views, "views.json");
  require_schema(boxes, "bboxes.json");
  ScenePackage pkg;
  try {
    const auto& vlist = views.at("views");
    for (std::size_t v = 0; v < vlist.size(); ++v) {
      pkg.views.push_back(camera_from_json(vlist[v]));
      const std::string mask_name = vlist[v].value("mask", "mask_" + std::to_string(v) + ".png");
      pkg.masks.push_back(read_mask((root / mask_name).string()));
    }
    for (const auto& b : boxes.at("bboxes")) {
      BBox box;
      box.center = {b.at("center").at(0).get<double>(), b.at("center").at(1).get<double>()};
      box.half_extent = {b.at("half_extent").at(0).get<double>(), b.at("half_extent").at(1).get<double>()};
      pkg.bboxes.push_back(box);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad scene package: ") + e.what());
  }
  const fs::path ply = root / "scene.ply";
  if (!fs::exists(ply)) throw Error(ErrorCode::kSchemaError, "missing " + ply.string());
  pkg.full_cloud = read_ply(ply.string());
  pkg.validate();
  return pkg;
}

void write_scene_package(const std::string& dir, const ScenePackage& pkg) {
  pkg.validate();
  const fs::path root(dir);
  fs::create_directories(root);
  nlohmann::json views = {{"schema_version", 1}, {"views", nlohmann::json::array()}};
  nlohmann::json boxes = {{"schema_version", 1}, {"bboxes", nlohmann::json::array()}};
  for (std::size_t v = 0; v < pkg.views.size(); ++v) {
    char name[32];
    std::snprintf(name, sizeof(name), "mask_%03zu.png", v);
    nlohmann::json j = to_json(pkg.views[v]);
    j["mask"] = name;
    views["views"].push_back(j);
    write_mask((root / name).string(), pkg.masks[v]);
    boxes["bboxes"].push_back({{"center", {pkg.bboxes[v].center.x(), pkg.bboxes[v].center.y()}},
                               {"half_extent", {pkg.bboxes[v].half_extent.x(), pkg.bboxes[v].half_extent.y()}}});
  }
  write_json((root / "views.json").string(), views);
  write_json((root / "bboxes.json").string(), boxes);
  write_ply((root / "scene.ply").string(), pkg.full_cloud);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace barrel

#include "dataset.hpp"

#include "gsgtrack/io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace gsg::tools {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", k);
  return buf;
}

json parse_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

template <class T>
T field(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw Error(ErrorCode::FormatError, path.string() + ": missing " + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + key + ": " + e.what());
  }
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

void write_sequence(const fs::path& dir, const SequenceInput& in) {
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");
  const Camera& c = in.camera;
  json j;
  j["camera"] = {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
                 {"width", c.width}, {"height", c.height}};
  j["first_extent"] = {in.first_extent.x(), in.first_extent.y()};
  j["frames"] = in.frames.size();
  write_text(dir / "sequence.json", j.dump(2) + "\n");
  for (std::size_t k = 0; k < in.frames.size(); ++k) {
    write_png(dir / "frames" / frame_name(static_cast<int>(k)), in.frames[k].image);
    write_mask_png(dir / "masks" / frame_name(static_cast<int>(k)), in.frames[k].mask);
  }
  if (in.ground_truth) write_ground_truth(dir / "ground_truth.json", *in.ground_truth);
}

SequenceInput read_sequence(const fs::path& dir) {
  const fs::path meta = dir / "sequence.json";
  const json j = parse_file(meta);
  SequenceInput in;
  const json cam = field<json>(j, "camera", meta);
  in.camera.fx = field<double>(cam, "fx", meta);
  in.camera.fy = field<double>(cam, "fy", meta);
  in.camera.cx = field<double>(cam, "cx", meta);
  in.camera.cy = field<double>(cam, "cy", meta);
  in.camera.width = field<int>(cam, "width", meta);
  in.camera.height = field<int>(cam, "height", meta);
  if (!in.camera.is_valid()) throw Error(ErrorCode::FormatError, meta.string() + ": invalid camera");
  const auto extent = field<std::vector<double>>(j, "first_extent", meta);
  if (extent.size() != 2) throw Error(ErrorCode::FormatError, meta.string() + ": first_extent needs 2 values");
  in.first_extent = Vec2(extent[0], extent[1]);
  const int n = field<int>(j, "frames", meta);
  if (n <= 0) throw Error(ErrorCode::EmptyInput, meta.string() + ": no frames");
  for (int k = 0; k < n; ++k) {
    try {
      SequenceFrame f{read_png(dir / "frames" / frame_name(k)), read_mask_png(dir / "masks" / frame_name(k))};
      if (f.image.height != in.camera.height || f.image.width != in.camera.width ||
          f.mask.height != in.camera.height || f.mask.width != in.camera.width) {
        throw Error(ErrorCode::FormatError, "size differs from the camera");
      }
      in.frames.push_back(std::move(f));
    } catch (const Error& e) {
      throw Error(e.code(), "frame " + std::to_string(k) + ": " + e.what());
    }
  }
  if (fs::exists(dir / "ground_truth.json")) in.ground_truth = read_ground_truth(dir / "ground_truth.json");
  return in;
}

void write_ground_truth(const fs::path& path, const GroundTruth& gt) {
  json j;
  j["diameter"] = gt.diameter;
  j["poses"] = json::array();
  for (const Pose& p : gt.poses) {
    std::vector<double> row;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) row.push_back(p.matrix()(r, c));
    j["poses"].push_back(row);
  }
  j["model_points"] = json::array();
  for (const Vec3& q : gt.model_points) j["model_points"].push_back({q.x(), q.y(), q.z()});
  write_text(path, j.dump() + "\n");
}

GroundTruth read_ground_truth(const fs::path& path) {
  const json j = parse_file(path);
  GroundTruth gt;
  gt.diameter = field<double>(j, "diameter", path);
  for (const auto& row : field<std::vector<std::vector<double>>>(j, "poses", path)) {
    if (row.size() != 12) throw Error(ErrorCode::FormatError, path.string() + ": poses need 12 values");
    Mat3 R;
    Vec3 t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) R(r, c) = row[4 * r + c];
      t(r) = row[4 * r + 3];
    }
    gt.poses.emplace_back(orthonormalize(R), t);
  }
  for (const auto& q : field<std::vector<std::vector<double>>>(j, "model_points", path)) {
    if (q.size() != 3) throw Error(ErrorCode::FormatError, path.string() + ": points need 3 values");
    gt.model_points.emplace_back(q[0], q[1], q[2]);
  }
  if (gt.poses.empty() || gt.model_points.empty() || !(gt.diameter > 0)) {
    throw Error(ErrorCode::FormatError, path.string() + ": empty ground truth");
  }
  return gt;
}

}  // namespace gsg::tools

#include "gsgtrack/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gsg {

static_assert(std::endian::native == std::endian::little, "GSGR/PLY I/O assumes little endian");

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot create " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

[[noreturn]] void format_error(std::size_t offset, const std::string& what) {
  throw Error(ErrorCode::FormatError, what + " at byte offset " + std::to_string(offset));
}

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

std::vector<unsigned char> encode_raster(const Raster<double>& r) {
  std::vector<unsigned char> out;
  out.reserve(16 + r.data.size() * 4);
  out.insert(out.end(), {'G', 'S', 'G', 'R'});
  put<std::uint32_t>(out, static_cast<std::uint32_t>(r.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(r.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(r.channels));
  for (double v : r.data) put<float>(out, static_cast<float>(v));
  return out;
}

Raster<double> decode_raster(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4) format_error(bytes.size(), "truncated magic");
  if (std::memcmp(bytes.data(), "GSGR", 4) != 0) format_error(0, "bad magic");
  std::array<std::uint32_t, 3> dims{};
  for (int i = 0; i < 3; ++i) {
    const std::size_t off = 4 + 4 * i;
    if (bytes.size() < off + 4) format_error(bytes.size(), "truncated header");
    std::memcpy(&dims[i], bytes.data() + off, 4);
  }
  if (dims[2] == 0) format_error(12, "zero channels");
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  const std::size_t expected = 16 + 4 * count;
  if (bytes.size() < expected) format_error(bytes.size(), "truncated data");
  if (bytes.size() > expected) format_error(expected, "trailing bytes");
  Raster<double> r(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                   static_cast<int>(dims[2]));
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 16 + 4 * i, 4);
    r.data[i] = f;
  }
  return r;
}

void write_raster(const std::filesystem::path& path, const Raster<double>& r) {
  const auto bytes = encode_raster(r);
  write_file(path, bytes.data(), bytes.size());
}

Raster<double> read_raster(const std::filesystem::path& path) {
  try {
    return decode_raster(read_file(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::FormatError) throw;
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

namespace {

std::vector<unsigned char> read_png_raw(const std::filesystem::path& path, png_uint_32 format,
                                        int& h, int& w) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  const auto bytes = read_file(path);
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::FormatError, path.string() + ": " + img.message);
  }
  h = static_cast<int>(img.height);
  w = static_cast<int>(img.width);
  return buf;
}

void write_png_raw(const std::filesystem::path& path, const std::vector<unsigned char>& buf,
                   int h, int w, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, path.string() + ": " + img.message);
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& rgb) {
  std::vector<unsigned char> buf(rgb.pixel_count() * 3);
  for (std::size_t p = 0; p < rgb.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const double v = rgb.channels == 3 ? rgb.at(p, c) : rgb.at(p, 0);
      buf[3 * p + c] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  write_png_raw(path, buf, rgb.height, rgb.width, PNG_FORMAT_RGB);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<unsigned char> buf(mask.pixel_count());
  for (std::size_t p = 0; p < buf.size(); ++p) buf[p] = mask.at(p) ? 255 : 0;
  write_png_raw(path, buf, mask.height, mask.width, PNG_FORMAT_GRAY);
}

Image read_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_RGB, h, w);
  Image img(h, w, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = buf[i] / 255.0;
  return img;
}

Mask read_mask_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_GRAY, h, w);
  Mask m(h, w, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = buf[i] >= 128 ? 1 : 0;
  return m;
}

void write_ply(const std::filesystem::path& path, const std::vector<Gaussian>& gaussians) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << gaussians.size() << "\n";
  for (const char* name : {"x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
                           "rot_2", "rot_3", "opacity", "red", "green", "blue"}) {
    header << "property float " << name << "\n";
  }
  header << "end_header\n";
  const std::string h = header.str();
  std::vector<unsigned char> out(h.begin(), h.end());
  for (const Gaussian& g : gaussians) {
    for (int i = 0; i < 3; ++i) put<float>(out, static_cast<float>(g.center(i)));
    for (int i = 0; i < 3; ++i) put<float>(out, static_cast<float>(g.log_scale(i)));
    for (int i = 0; i < 4; ++i) put<float>(out, static_cast<float>(g.rotation(i)));
    put<float>(out, static_cast<float>(g.opacity_logit));
    for (int i = 0; i < 3; ++i) put<float>(out, static_cast<float>(g.color(i)));
  }
  write_file(path, out.data(), out.size());
}

std::vector<Gaussian> read_ply(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  const std::size_t end = text.find("end_header\n");
  if (text.rfind("ply\n", 0) != 0 || end == std::string::npos) {
    format_error(0, "not a PLY file");
  }
  std::istringstream header(text.substr(0, end));
  std::string line;
  std::size_t count = 0;
  std::vector<std::string> props;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") format_error(0, "unsupported PLY format " + fmt);
    } else if (kw == "element") {
      std::string name;
      ls >> name >> count;
    } else if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") format_error(0, "unsupported property type " + type);
      props.push_back(name);
    }
  }
  const std::vector<std::string> expected = {"x",     "y",     "z",     "scale_0", "scale_1",
                                             "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
                                             "opacity", "red", "green", "blue"};
  if (props != expected) format_error(0, "unexpected PLY properties");
  const std::size_t data = end + std::string("end_header\n").size();
  if (bytes.size() != data + count * 14 * 4) format_error(bytes.size(), "PLY size mismatch");
  std::vector<Gaussian> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    float f[14];
    std::memcpy(f, bytes.data() + data + i * 56, 56);
    Gaussian& g = out[i];
    g.center = Vec3(f[0], f[1], f[2]);
    g.log_scale = Vec3(f[3], f[4], f[5]);
    g.rotation = Vec4(f[6], f[7], f[8], f[9]);
    g.opacity_logit = f[10];
    g.color = Vec3(f[11], f[12], f[13]);
  }
  return out;
}

}  // namespace gsg

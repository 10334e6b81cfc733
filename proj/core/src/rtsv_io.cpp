#include "rtsrts/rtsv_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "rtsrts/error.hpp"

namespace rtsrts::io {

namespace fs = std::filesystem;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes 32-bit lengths; feed large bodies in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_of(const std::string& text) {
  return crc32_of(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw IoError("cannot format number");
  return std::string(buf, ptr);
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IoError(context + ": cannot parse number '" + s + "'");
  }
  return v;
}

const std::string* RtsvHeader::find_extra(const std::string& key) const {
  for (const auto& [k, v] : extra) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("cannot read " + path.string());
  }
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

namespace {

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  return parts;
}

std::int64_t element_count(const RtsvHeader& h) {
  std::int64_t n = h.components;
  for (auto d : h.dims) n *= d;
  return n;
}

std::size_t dtype_size(const std::string& dtype, const std::string& file) {
  if (dtype == "f32le") return 4;
  if (dtype == "u8") return 1;
  throw IoError(file + ": unsupported dtype '" + dtype + "'");
}

std::vector<std::uint8_t> encode_f32(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

std::vector<float> decode_f32(std::span<const std::uint8_t> bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[4 * i + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

RtsvHeader grid_header(const Grid3& g, int components, const std::string& dtype) {
  RtsvHeader h;
  h.dims = {g.dims[0], g.dims[1], g.dims[2]};
  h.spacing_mm = {g.spacing[0], g.spacing[1], g.spacing[2]};
  h.origin_mm = {g.origin[0], g.origin[1], g.origin[2]};
  h.components = components;
  h.dtype = dtype;
  return h;
}

Grid3 grid_from(const RtsvHeader& h, const std::string& file) {
  if (h.dims.size() != 3 || h.spacing_mm.size() != 3 || h.origin_mm.size() != 3) {
    throw IoError(file + ": expected a 3D grid");
  }
  Grid3 g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = h.dims[a];
    g.spacing[a] = h.spacing_mm[a];
    g.origin[a] = h.origin_mm[a];
  }
  try {
    validate(g);
  } catch (const ValidationError& e) {
    throw IoError(file + ": " + e.what());
  }
  return g;
}

void expect(const RtsvHeader& h, int components, const std::string& dtype, const std::string& file) {
  if (h.components != components || h.dtype != dtype) {
    throw IoError(file + ": expected components=" + std::to_string(components) + " dtype=" + dtype +
                  ", found components=" + std::to_string(h.components) + " dtype=" + h.dtype);
  }
}

}  // namespace

void write_rtsv(const fs::path& meta_path, const RtsvHeader& header,
                std::span<const std::uint8_t> body) {
  const auto expected = element_count(header) * static_cast<std::int64_t>(dtype_size(header.dtype, meta_path.string()));
  if (static_cast<std::int64_t>(body.size()) != expected) {
    throw IoError(meta_path.string() + ": body size does not match header");
  }
  fs::path body_path = meta_path;
  body_path.replace_extension(".raw");
  std::ostringstream os;
  os << "magic=RTSV1\n";
  os << "dims=" << join(header.dims) << '\n';
  os << "spacing_mm=" << join(header.spacing_mm) << '\n';
  os << "origin_mm=" << join(header.origin_mm) << '\n';
  os << "components=" << header.components << '\n';
  os << "dtype=" << header.dtype << '\n';
  os << "order=z-major\n";
  os << "body=" << body_path.filename().string() << '\n';
  os << "checksum=" << hex32(crc32_of(body)) << '\n';
  for (const auto& [k, v] : header.extra) os << k << '=' << v << '\n';
  write_file(body_path, body);
  write_text(meta_path, os.str());
}

std::pair<RtsvHeader, std::vector<std::uint8_t>> read_rtsv(const fs::path& meta_path) {
  const std::string file = meta_path.string();
  const std::string text = read_text(meta_path);
  RtsvHeader h;
  std::string magic, order, body_name, checksum;
  bool have_dims = false, have_spacing = false;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(file + ": malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "magic") {
      magic = value;
    } else if (key == "dims") {
      for (const auto& p : split(value, ',')) h.dims.push_back(static_cast<std::int64_t>(parse_double(p, file)));
      have_dims = true;
    } else if (key == "spacing_mm") {
      for (const auto& p : split(value, ',')) h.spacing_mm.push_back(parse_double(p, file));
      have_spacing = true;
    } else if (key == "origin_mm") {
      for (const auto& p : split(value, ',')) h.origin_mm.push_back(parse_double(p, file));
    } else if (key == "components") {
      h.components = static_cast<int>(parse_double(value, file));
    } else if (key == "dtype") {
      h.dtype = value;
    } else if (key == "order") {
      order = value;
    } else if (key == "body") {
      body_name = value;
    } else if (key == "checksum") {
      checksum = value;
    } else {
      h.extra.emplace_back(key, value);
    }
  }
  if (magic != "RTSV1") throw IoError(file + ": bad magic '" + magic + "'");
  if (order != "z-major") throw IoError(file + ": unsupported order '" + order + "'");
  if (!have_dims || !have_spacing || body_name.empty() || checksum.empty()) {
    throw IoError(file + ": missing required keys");
  }
  if (h.origin_mm.empty()) h.origin_mm.assign(h.dims.size(), 0.0);
  for (auto d : h.dims) {
    if (d <= 0) throw IoError(file + ": non-positive dims");
  }
  const fs::path body_path = meta_path.parent_path() / body_name;
  auto body = read_file(body_path);
  const auto expected = element_count(h) * static_cast<std::int64_t>(dtype_size(h.dtype, file));
  if (static_cast<std::int64_t>(body.size()) != expected) {
    throw IoError(body_path.string() + ": size " + std::to_string(body.size()) + " does not match header (" +
                  std::to_string(expected) + " bytes)");
  }
  if (hex32(crc32_of(body)) != checksum) {
    throw IoError(body_path.string() + ": checksum mismatch");
  }
  return {std::move(h), std::move(body)};
}

void write_volume(const fs::path& path, const Volume& v) {
  validate(v);
  write_rtsv(path, grid_header(v.grid, 1, "f32le"), encode_f32(v.voxels));
}

Volume read_volume(const fs::path& path) {
  auto [h, body] = read_rtsv(path);
  expect(h, 1, "f32le", path.string());
  Volume v{grid_from(h, path.string()), decode_f32(body)};
  try {
    validate(v);
  } catch (const ValidationError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return v;
}

void write_mask(const fs::path& path, const Mask& m) {
  validate(m);
  write_rtsv(path, grid_header(m.grid, 1, "u8"), m.voxels);
}

Mask read_mask(const fs::path& path) {
  auto [h, body] = read_rtsv(path);
  expect(h, 1, "u8", path.string());
  Mask m{grid_from(h, path.string()), std::move(body)};
  try {
    validate(m);
  } catch (const ValidationError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return m;
}

void write_dvf(const fs::path& path, const DisplacementField& f) {
  validate(f);
  write_rtsv(path, grid_header(f.grid, 3, "f32le"), encode_f32(f.vectors));
}

DisplacementField read_dvf(const fs::path& path) {
  auto [h, body] = read_rtsv(path);
  expect(h, 3, "f32le", path.string());
  DisplacementField f{grid_from(h, path.string()), decode_f32(body)};
  try {
    validate(f);
  } catch (const ValidationError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return f;
}

void write_projection(const fs::path& path, const Projection& p) {
  const auto& g = p.geometry;
  if (static_cast<std::int64_t>(p.pixels.size()) != g.nu * g.nv) {
    throw IoError(path.string() + ": projection pixel count does not match geometry");
  }
  RtsvHeader h;
  h.dims = {g.nu, g.nv};
  h.spacing_mm = {g.du, g.dv};
  h.origin_mm = {0.0, 0.0};
  h.extra = {{"angle_deg", format_double(g.angle_deg)},
             {"beam", to_string(g.beam)},
             {"sad_mm", format_double(g.sad_mm)},
             {"sdd_mm", format_double(g.sdd_mm)}};
  write_rtsv(path, h, encode_f32(p.pixels));
}

Projection read_projection(const fs::path& path) {
  const std::string file = path.string();
  auto [h, body] = read_rtsv(path);
  expect(h, 1, "f32le", file);
  if (h.dims.size() != 2 || h.spacing_mm.size() != 2) throw IoError(file + ": expected a 2D projection");
  Projection p;
  p.geometry.nu = h.dims[0];
  p.geometry.nv = h.dims[1];
  p.geometry.du = h.spacing_mm[0];
  p.geometry.dv = h.spacing_mm[1];
  if (const auto* s = h.find_extra("angle_deg")) p.geometry.angle_deg = parse_double(*s, file);
  if (const auto* s = h.find_extra("beam")) p.geometry.beam = beam_from_string(*s);
  if (const auto* s = h.find_extra("sad_mm")) p.geometry.sad_mm = parse_double(*s, file);
  if (const auto* s = h.find_extra("sdd_mm")) p.geometry.sdd_mm = parse_double(*s, file);
  p.pixels = decode_f32(body);
  for (float v : p.pixels) {
    if (!std::isfinite(v)) throw IoError(file + ": non-finite pixel");
  }
  return p;
}

void write_pgm(const fs::path& path, std::int64_t width, std::int64_t height,
               std::span<const std::uint8_t> pixels) {
  if (static_cast<std::int64_t>(pixels.size()) != width * height) {
    throw IoError(path.string() + ": PGM pixel count does not match dimensions");
  }
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), pixels.begin(), pixels.end());
  write_file(path, bytes);
}

}  // namespace rtsrts::io

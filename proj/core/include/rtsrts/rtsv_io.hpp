#pragma once

// RTSV1 container: a `key=value` metadata text file beside a raw little-endian
// body file. Keys written, in order: magic, dims, spacing_mm, origin_mm,
// components, dtype, order, body, checksum (CRC32 of the body, 8 hex digits),
// followed by any object-specific keys (projection geometry, for example).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtsrts/projector.hpp"
#include "rtsrts/volume.hpp"

namespace rtsrts::io {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);
std::uint32_t crc32_of(const std::string& text);
std::string hex32(std::uint32_t v);

// Shortest text form that parses back to the identical double.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);

struct RtsvHeader {
  std::vector<std::int64_t> dims;  // 3 for volumes, 2 for projections
  std::vector<double> spacing_mm;
  std::vector<double> origin_mm;
  int components = 1;
  std::string dtype = "f32le";  // f32le | u8
  std::vector<std::pair<std::string, std::string>> extra;

  const std::string* find_extra(const std::string& key) const;
};

// `meta_path` names the metadata file; the body is written beside it with
// the extension replaced by ".raw".
void write_rtsv(const std::filesystem::path& meta_path, const RtsvHeader& header,
                std::span<const std::uint8_t> body);
// Parses the metadata, loads the body and verifies size and checksum.
std::pair<RtsvHeader, std::vector<std::uint8_t>> read_rtsv(const std::filesystem::path& meta_path);

void write_volume(const std::filesystem::path& path, const Volume& v);
Volume read_volume(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& m);
Mask read_mask(const std::filesystem::path& path);
void write_dvf(const std::filesystem::path& path, const DisplacementField& f);
DisplacementField read_dvf(const std::filesystem::path& path);
void write_projection(const std::filesystem::path& path, const Projection& p);
Projection read_projection(const std::filesystem::path& path);

// Whole-file helpers.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Binary 8-bit grayscale PGM (P5), row-major.
void write_pgm(const std::filesystem::path& path, std::int64_t width, std::int64_t height,
               std::span<const std::uint8_t> pixels);

}  // namespace rtsrts::io

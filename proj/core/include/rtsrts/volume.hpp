#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace rtsrts {

// Voxel lattice: x = left-right, y = anterior-posterior, z = superior-inferior.
// Voxel (i,j,k) has its center at origin + (i,j,k) * spacing (mm) and is
// stored at linear index (k * ny + j) * nx + i ("z-major").
struct Grid3 {
  std::array<std::int64_t, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  std::int64_t nx() const { return dims[0]; }
  std::int64_t ny() const { return dims[1]; }
  std::int64_t nz() const { return dims[2]; }
  std::int64_t count() const { return dims[0] * dims[1] * dims[2]; }
  std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return (k * dims[1] + j) * dims[0] + i;
  }
  // Physical size covered by the voxels (not by their centers).
  std::array<double, 3> extent_mm() const {
    return {dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]};
  }
  std::array<double, 3> center_mm() const {
    return {origin[0] + 0.5 * (dims[0] - 1) * spacing[0],
            origin[1] + 0.5 * (dims[1] - 1) * spacing[1],
            origin[2] + 0.5 * (dims[2] - 1) * spacing[2]};
  }

  bool operator==(const Grid3&) const = default;
};

std::string describe(const Grid3& g);
// Throws ValidationError unless dims > 0 and spacing > 0.
void validate(const Grid3& g);
// Throws ValidationError naming both grids when they differ.
void require_same_grid(const Grid3& a, const Grid3& b, const char* what);

struct Volume {
  Grid3 grid;
  std::vector<float> voxels;

  static Volume filled(const Grid3& grid, float value);
  float at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return voxels[static_cast<std::size_t>(grid.index(i, j, k))];
  }
  bool operator==(const Volume&) const = default;
};

struct Mask {
  Grid3 grid;
  std::vector<std::uint8_t> voxels;

  static Mask filled(const Grid3& grid, std::uint8_t value);
  std::int64_t count() const;
  bool operator==(const Mask&) const = default;
};

// Per-voxel displacement in mm, three interleaved components (dx,dy,dz).
struct DisplacementField {
  Grid3 grid;
  std::vector<float> vectors;

  static DisplacementField zeros(const Grid3& grid);
  float max_magnitude() const;
  bool operator==(const DisplacementField&) const = default;
};

void validate(const Volume& v);
// Also checks the {0,1} value set.
void validate(const Mask& m);
void validate(const DisplacementField& f);

// Affine map of [min,max] onto [0,1]; constant input becomes all zeros.
Volume normalize_unit(const Volume& v);
void normalize_unit_inplace(std::vector<float>& values);

// Trilinear sample at continuous voxel coordinates with indices clamped to
// the lattice (border replication).
double sample_trilinear(const Volume& v, double x, double y, double z);

}  // namespace rtsrts

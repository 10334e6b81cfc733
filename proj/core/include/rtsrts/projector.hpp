#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtsrts/volume.hpp"

namespace rtsrts {

enum class Beam { Parallel, Cone };

std::string to_string(Beam b);
Beam beam_from_string(const std::string& s);

// Gantry geometry. The gantry rotates about the superior-inferior (z) axis;
// angle 0 sends rays along +x (lateral), 90 along +y (anterior-posterior).
// The detector is centered on the rotation axis, u runs along
// (-sin a, cos a, 0) and v along +z.
struct Geometry {
  double angle_deg = 0.0;
  Beam beam = Beam::Parallel;
  double sad_mm = 1000.0;  // source-axis distance (cone only)
  double sdd_mm = 1500.0;  // source-detector distance (cone only)
  std::int64_t nu = 0, nv = 0;
  double du = 1.0, dv = 1.0;

  bool operator==(const Geometry&) const = default;
};

// Line-integral image, row-major with nv rows of nu pixels.
struct Projection {
  Geometry geometry;
  std::vector<float> pixels;

  float at(std::int64_t iu, std::int64_t iv) const {
    return pixels[static_cast<std::size_t>(iv * geometry.nu + iu)];
  }
  bool operator==(const Projection&) const = default;
};

// Square detector with `pixel_mm` pitch large enough to cover the volume's
// footprint at every gantry angle.
Geometry fit_detector(const Grid3& grid, double angle_deg, Beam beam, double pixel_mm,
                      double sad_mm = 1000.0, double sdd_mm = 1500.0);

// Throws ValidationError for degenerate or non-covering geometry.
void validate(const Geometry& geom, const Grid3& grid);

// Ray-marched digitally reconstructed radiograph. Each pixel holds the
// mm-weighted line integral of the volume along its ray, sampled with the
// midpoint rule at a uniform step (default: half the smallest voxel spacing)
// and trilinear interpolation. The volume occupies the box spanned by its
// voxel extents and is zero outside.
Projection render_drr(const Volume& vol, const Geometry& geom, double step_mm = 0.0);

Projection normalize_unit(const Projection& p);

// Adds i.i.d. N(0, sigma_ratio^2) noise (the normalized intensity range is
// 1) and clamps to [0,1]. sigma_ratio == 0 returns the input unchanged.
Projection add_gaussian_noise(const Projection& p, double sigma_ratio, std::uint64_t seed);

}  // namespace rtsrts

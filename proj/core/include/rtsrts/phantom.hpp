#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rtsrts/volume.hpp"

namespace rtsrts::phantom {

struct Ellipsoid {
  std::array<double, 3> center_mm{};  // offset from the grid center
  std::array<double, 3> semi_axes_mm{1.0, 1.0, 1.0};
};

// Thorax-like phantom. Positions are offsets (mm) from the grid center;
// +z is superior, +y is posterior.
struct PhantomSpec {
  Grid3 grid;
  // Elliptic cylinder running the full superior-inferior length.
  std::array<double, 2> body_semi_axes_mm{};
  std::array<Ellipsoid, 2> lungs{};
  std::array<double, 2> spine_center_mm{};
  double spine_radius_mm = 0.0;
  // Rib rings: elliptic shells scaled from the body outline.
  int rib_count = 0;
  double rib_inner_scale = 0.0;
  double rib_outer_scale = 0.0;
  double rib_pitch_mm = 0.0;
  double rib_thickness_mm = 0.0;
  // Seeded vessel blobs inside each lung.
  int vessels_per_lung = 0;
  double vessel_radius_mm = 0.0;

  std::array<double, 3> tumor_center_mm{};
  double tumor_radius_mm = 0.0;

  double breathing_amplitude_mm = 0.0;  // superior-inferior peak shift
  double compression_factor = 0.0;      // peak in-plane radial scale change
  // In-plane weight of the superior-inferior motion: 1 inside the inner
  // radius, cosine taper to 0 at the outer radius.
  double motion_inner_radius_mm = 0.0;
  double motion_outer_radius_mm = 0.0;
  // Superior-inferior weight: 1 below `apex_start_mm`, tapering to
  // `apex_weight` above `apex_end_mm`; evaluated at the displaced position.
  double apex_start_mm = 0.0;
  double apex_end_mm = 0.0;
  double apex_weight = 1.0;

  float body_intensity = 0.3f;
  float lung_intensity = 0.05f;
  float bone_intensity = 0.9f;
  float vessel_intensity = 0.2f;
  float tumor_intensity = 0.45f;

  int phase_count = 10;
  int supersampling = 3;
  std::uint64_t seed = 0;

  // Proportional anatomy for a grid centered at the origin.
  static PhantomSpec for_grid(const Grid3& grid, std::uint64_t seed = 0);
  // 32 x 32 x 24 voxels at (3,3,4) mm.
  static PhantomSpec desk();
  // 128 mm cube at 1 mm.
  static PhantomSpec paper();
};

void validate(const PhantomSpec& spec);

struct Phase {
  Volume volume;
  Mask mask;
};

struct Phantom {
  Volume reference;
  Mask reference_mask;
  std::vector<Phase> phases;
  std::vector<DisplacementField> dvfs;
};

Phantom generate_phantom(const PhantomSpec& spec);

// Analytic pull field for phase `phase` (reference -> phase coordinates).
DisplacementField phase_dvf(const PhantomSpec& spec, int phase);
// Lung region of the reference (voxel-center test).
Mask lung_mask(const PhantomSpec& spec);

// Directory layout: reference.rtsv, reference_mask.rtsv and per phase
// phase_<i>.rtsv, phase_<i>_mask.rtsv, dvf_<i>.rtsv for i in [0, 10).
void save_phantom(const Phantom& p, const std::filesystem::path& dir);
Phantom load_external_4dct(const std::filesystem::path& dir, int phase_count = 10);

}  // namespace rtsrts::phantom

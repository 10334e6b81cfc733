#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtsrts/motion.hpp"
#include "rtsrts/phantom.hpp"
#include "rtsrts/projector.hpp"
#include "rtsrts/volume.hpp"

namespace rtsrts::dataset {

enum class Interp { Cubic, Nearest };

// Resampling onto an arbitrary target lattice. Target voxel centers are
// mapped to source voxel coordinates through physical space; the source is
// border-replicated. Cubic uses the Catmull-Rom kernel separably.
Volume resample_to(const Volume& vol, const Grid3& target, Interp interp);
Mask resample_to(const Mask& mask, const Grid3& target);
DisplacementField resample_to(const DisplacementField& dvf, const Grid3& target);

// Target lattice with isotropic `spacing_mm` covering the same physical box
// (dims rounded to the nearest integer, centered on the source center).
Grid3 isotropic_grid(const Grid3& source, double spacing_mm);
// Lattice with `dims` covering the same physical box.
Grid3 resized_grid(const Grid3& source, std::array<std::int64_t, 3> dims);

Volume resample_isotropic(const Volume& vol, double spacing_mm, Interp interp = Interp::Cubic);
Mask resample_isotropic(const Mask& mask, double spacing_mm);

// Resizes a projection to size x size pixels (cubic), adjusting the pitch.
Projection resize_projection(const Projection& p, std::int64_t size);

struct DatasetConfig {
  int input_size = 32;
  int output_size = 32;
  int n_samples = 120;
  std::uint64_t seed = 1234;
  double resample_spacing_mm = 1.0;
  int pca_rank = 3;
  double coeff_extrapolation = 1.2;
  Beam beam = Beam::Parallel;
  double sad_mm = 1000.0;
  double sdd_mm = 1500.0;
  double detector_pixel_mm = 1.0;
};

void validate(const DatasetConfig& cfg);

// Split sizes {train, val, test}: val = test = round(n * 100 / 1080).
std::array<int, 3> split_counts(int n);

// Resampled reference anatomy plus the motion model fitted on the resampled
// phase fields.
struct MotionSource {
  Volume reference;
  Mask reference_mask;
  motion::PcaMotionModel model;
};

MotionSource prepare_source(const phantom::Phantom& p, const DatasetConfig& cfg);

struct SampleRecord {
  std::string id;
  std::string split;
  double angle_deg = 0.0;
  std::vector<double> coeffs;
  std::string proj_path, vol_path, mask_path;  // relative to the manifest root
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string config_hash;
  std::uint64_t seed = 0;
  int input_size = 0;
  int output_size = 0;
  std::vector<SampleRecord> records;

  std::vector<const SampleRecord*> split(const std::string& name) const;
  const SampleRecord& find(const std::string& id) const;
};

struct Sample {
  std::string id;
  std::string split;
  double angle_deg = 0.0;
  std::vector<double> coeffs;
  Projection projection;
  Volume volume;
  Mask mask;
};

std::string sample_id(int index);

// One sample from its own seed (base seed + index), independent of any
// other sample. `fixed_angle` pins the gantry angle; the random angle is
// still drawn so that every other quantity matches the random-angle run.
Sample generate_sample(const MotionSource& src, const DatasetConfig& cfg, int index,
                       std::optional<double> fixed_angle = std::nullopt);

// Generates, persists and catalogs n_samples samples under `dir`.
DatasetManifest build_dataset(const MotionSource& src, const DatasetConfig& cfg,
                              const std::filesystem::path& dir, const std::string& config_hash);
DatasetManifest build_fixed_angle_dataset(const MotionSource& src, const DatasetConfig& cfg,
                                          const std::filesystem::path& dir,
                                          const std::string& config_hash, double angle_deg);

// manifest.csv plus manifest.meta in manifest.root.
void write_manifest(const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& dir);

Sample load_sample(const DatasetManifest& m, const std::string& id);

}  // namespace rtsrts::dataset

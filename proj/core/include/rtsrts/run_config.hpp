#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rtsrts/dataset.hpp"
#include "rtsrts/network.hpp"
#include "rtsrts/phantom.hpp"
#include "rtsrts/training.hpp"

namespace rtsrts {

// Aggregated experiment configuration. JSON layout:
//   { "scale": "desk"|"paper", "seed": u64, "out_dir": str,
//     "phantom":  { dims, spacing_mm, breathing_amplitude_mm, compression_factor, seed },
//     "dataset":  { n_samples, input_size, output_size, resample_spacing_mm, pca_rank,
//                   coeff_extrapolation, beam, sad_mm, sdd_mm, detector_pixel_mm },
//     "network":  { levels, base_channels, enable_seg_branch, enable_aec, enable_ure,
//                   attention_residual_init, aec_norm, bottleneck, leaky_slope },
//     "training": { epochs, lr0, decay_start, beta1, beta2, eps, alpha1, alpha2, deep_supervision },
//     "eval":     { noise_sigmas, repetitions } }
// "scale" selects the preset the remaining keys override. Every key is
// optional; unknown keys are rejected with their path.
struct RunConfig {
  std::string scale = "desk";
  std::uint64_t seed = 1234;
  std::string out_dir = "out";
  phantom::PhantomSpec phantom;
  dataset::DatasetConfig dataset;
  network::NetworkConfig network;
  training::TrainConfig training;
  std::vector<double> noise_sigmas{0.0, 0.01, 0.02, 0.05};
  int repetitions = 20;

  // Seeds of the individual stages, derived from `seed`.
  std::uint64_t init_seed() const { return seed + 1; }
  std::uint64_t noise_seed() const { return seed + 3; }
};

RunConfig preset(const std::string& scale);
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Re-derives seeds and the network input size after a field changed.
void finalize(RunConfig& cfg);
void validate(const RunConfig& cfg);

// Every field, defaults expanded; parsing it yields the same config.
std::string resolved_json(const RunConfig& cfg);
// Hash of everything that determines the generated data.
std::string dataset_hash(const RunConfig& cfg);
// Writes resolved_config.json into `dir`.
void write_resolved(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace rtsrts

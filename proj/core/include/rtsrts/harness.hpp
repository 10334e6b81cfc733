#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtsrts/dataset.hpp"
#include "rtsrts/metrics.hpp"
#include "rtsrts/run_config.hpp"
#include "rtsrts/training.hpp"

namespace rtsrts::harness {

namespace fs = std::filesystem;

// "random" or "fixed:<deg>".
struct AngleMode {
  std::optional<double> fixed_deg;
  std::string tag() const;
};
AngleMode parse_angle_mode(const std::string& s);

// Phantom -> PCA fit -> dataset under `out`. Writes resolved_config.json.
dataset::DatasetManifest cmd_synth(const RunConfig& cfg, const fs::path& out);

struct TrainOutputs {
  fs::path best_checkpoint;
  fs::path final_checkpoint;
  fs::path log_csv;
  training::TrainResult result;
};

// Trains from the config's seed on the manifest in `data`. Writes
// checkpoint_best.rtsc, checkpoint_final.rtsc, train_log.csv.
TrainOutputs cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                       const training::EpochCallback& on_epoch = {});

// Evaluates a checkpoint on a split. Fixed angles regenerate the split's
// samples with the pinned angle (targets are unchanged). Writes
// eval_<split>_<angle>.csv and slices/<id>_recon.pgm, slices/<id>_overlay.pgm.
metrics::EvalReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
                             const std::string& split, const AngleMode& angle, const fs::path& out);

// One report per configured sigma on the test split plus noise_sweep.csv.
std::vector<metrics::EvalReport> cmd_noise_sweep(const RunConfig& cfg, const fs::path& checkpoint,
                                                 const fs::path& data, const fs::path& out);

struct AblationRow {
  std::string name;
  bool seg = false, aec = false, ure = false;
  std::string manifest_hash;
  metrics::EvalReport report;
};

// Trains and evaluates the four rows baseline / +seg / +seg+aec /
// +seg+aec+ure; writes ablation.csv.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                                    const training::EpochCallback& on_epoch = {});

struct InferStats {
  std::optional<std::array<double, 3>> centroid_mm;
  std::vector<double> latencies_ms;  // timed passes, warm-up excluded
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

// Runs the checkpoint on one projection `repetitions` times; writes
// recon.rtsv, mask.rtsv and infer.json.
InferStats cmd_infer(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& projection, int repetitions,
                     const fs::path& out);

// Summarizes the aggregate rows of every report CSV under `dir`.
std::string cmd_report(const fs::path& dir);

// Lattice of the network outputs implied by the config.
Grid3 target_grid(const RunConfig& cfg);

// Side-by-side slice and the FN/FP/TP overlay (64/160/255) of one sample.
void write_slice_dumps(const fs::path& dir, const std::string& id, const Volume& recon, const Volume& target,
                       const std::optional<Mask>& seg, const Mask& target_mask);

}  // namespace rtsrts::harness

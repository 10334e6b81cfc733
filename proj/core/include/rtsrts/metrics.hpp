#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rtsrts/dataset.hpp"
#include "rtsrts/network.hpp"
#include "rtsrts/tensor.hpp"
#include "rtsrts/volume.hpp"

namespace rtsrts::metrics {

double mae(const Volume& pred, const Volume& target);
double mse(const Volume& pred, const Volume& target);
double rmse(const Volume& pred, const Volume& target);

// 10 log10(1 / mse); +infinity when mse == 0.
double psnr_from_mse(double mse);
double psnr(const Volume& pred, const Volume& target);

// Volumetric SSIM: separable 11^3 Gaussian window (sigma 1.5), L = 1,
// averaged over every window position fully inside the volume.
double ssim(const Volume& pred, const Volume& target);

// 2|A n B| / (|A| + |B|); 1 when both are empty.
double dice(const Mask& pred, const Mask& target);

// Physical centroid (mm) of a mask; nullopt when empty.
std::optional<std::array<double, 3>> centroid_mm(const Mask& m);
// Distance between centroids in mm; nullopt when either mask is empty.
std::optional<double> comd(const Mask& pred, const Mask& target);

// Tumor where M1 > M2 (ties go to background). `probs` is [2,D,H,W].
Mask binarize_seg(const tensor::Tensor<float>& probs, const Grid3& grid);
Volume to_volume(const tensor::Tensor<float>& recon, const Grid3& grid);

struct SampleMetrics {
  std::string sample_id;
  std::string tag;
  double mae = 0, mse = 0, rmse = 0, psnr_db = 0, ssim = 0;
  std::optional<double> dice;     // absent without a segmentation output
  std::optional<double> comd_mm;  // absent without segmentation or for an empty mask
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1)
  int count = 0;     // rows contributing (finite, present)
};

struct EvalReport {
  std::string tag;
  std::vector<SampleMetrics> rows;

  // Column order: mae, mse, rmse, psnr_db, ssim, dice, comd_mm.
  static const std::vector<std::string>& columns();
  Aggregate aggregate(const std::string& column) const;
  // sample_id,tag,mae,mse,rmse,psnr_db,ssim,dice,comd_mm rows, then a blank
  // line and `aggregate,<tag>,...` mean and std rows. Missing values are empty
  // cells; infinite PSNR is written as "inf".
  std::string to_csv() const;
};

std::string format_metric(std::optional<double> v);

// Computes all metrics of one prediction.
SampleMetrics score(const std::string& id, const std::string& tag, const Volume& recon, const Volume& target,
                    const std::optional<Mask>& seg, const Mask& target_mask);

// Runs the model on every listed sample. `noise_sigma` > 0 perturbs each
// projection with a per-sample seed (noise_seed + sample index).
EvalReport evaluate_suite(const network::ModelState<float>& model, const std::vector<dataset::Sample>& samples,
                          const std::string& tag, double noise_sigma = 0.0, std::uint64_t noise_seed = 0);

}  // namespace rtsrts::metrics

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rtsrts/dataset.hpp"
#include "rtsrts/network.hpp"
#include "rtsrts/tensor.hpp"

namespace rtsrts::training {

struct TrainConfig {
  int epochs = 60;
  double lr0 = 2e-3;
  int decay_start = 30;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double eps = 1e-8;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  std::uint64_t seed = 7;
  // Adds alpha2 * BCE of the pre-refinement probabilities.
  bool deep_supervision = false;
};

void validate(const TrainConfig& cfg);

// mean((pred - target)^2)
template <typename T>
tensor::Tensor<T> mse_loss(const tensor::Tensor<T>& pred, const tensor::Tensor<T>& target);

// mean(-[y log p + (1-y) log(1-p)]) with p clamped to [1e-7, 1-1e-7]; y in {0,1}.
template <typename T>
tensor::Tensor<T> bce_loss(const tensor::Tensor<T>& p, const tensor::Tensor<T>& y);

template <typename T>
struct LossParts {
  tensor::Tensor<T> total;
  tensor::Tensor<T> mse;
  tensor::Tensor<T> bce;  // undefined when the segmentation term is absent
};

// alpha1 * mse + alpha2 * bce. `seg_p` is the tumor-channel probability map;
// when undefined the segmentation term is dropped.
template <typename T>
LossParts<T> total_loss(const tensor::Tensor<T>& recon, const tensor::Tensor<T>& target_vol,
                        const tensor::Tensor<T>& seg_p, const tensor::Tensor<T>& target_mask, double alpha1,
                        double alpha2);

// Learning rate for 1-based epoch: lr0 up to decay_start, then linear to 0 at N.
double lr_at(int epoch, const TrainConfig& cfg);

// Bias-corrected Adam update; increments the store's step counter.
template <typename T>
void adam_step(ParamStore<T>& params, double lr, double beta1, double beta2, double eps);

// Network-ready tensors of one sample.
struct SampleTensors {
  std::string id;
  tensor::Tensor<float> projection;  // [1,S,S]
  tensor::Tensor<float> volume;      // [1,S,S,S]
  tensor::Tensor<float> mask;        // [1,S,S,S], tumor = 1
};

SampleTensors to_tensors(const dataset::Sample& s);
std::vector<SampleTensors> load_split(const dataset::DatasetManifest& m, const std::string& split);

// Loss of the model on one sample (forward + total_loss).
LossParts<float> sample_loss(const network::ModelState<float>& model, const SampleTensors& s,
                             const TrainConfig& cfg);
// Mean total loss without recording a graph; parameters are not touched.
double validation_loss(const network::ModelState<float>& model, const std::vector<SampleTensors>& samples,
                       const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;
  double train_bce = 0.0;
  double train_total = 0.0;
  double val_total = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;  // 1-based; epoch with the smallest validation loss (first on ties)

  // epoch,lr,train_mse,train_bce,train_total,val_total,seconds
  std::string to_csv() const;
};

struct TrainResult {
  network::ModelState<float> best;
  network::ModelState<float> final_model;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const network::ModelState<float>& initial, const std::vector<SampleTensors>& train_set,
                  const std::vector<SampleTensors>& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});
TrainResult train(const network::ModelState<float>& initial, const dataset::DatasetManifest& manifest,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace rtsrts::training

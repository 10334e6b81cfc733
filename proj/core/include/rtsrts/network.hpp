#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtsrts/param_store.hpp"
#include "rtsrts/tensor.hpp"

namespace rtsrts::network {

// How the deepest 2D feature map becomes the first 3D decoder tensor.
enum class BottleneckMode { Reshape, Replicate };

std::string to_string(BottleneckMode m);
BottleneckMode bottleneck_from_string(const std::string& s);

struct NetworkConfig {
  int input_size = 32;
  int levels = 5;
  int base_channels = 16;
  bool enable_seg_branch = true;
  bool enable_aec = true;
  bool enable_ure = true;
  double attention_residual_init = 0.0;
  bool aec_norm = true;
  BottleneckMode bottleneck = BottleneckMode::Reshape;
  double leaky_slope = 0.2;

  int output_size() const { return input_size; }
  // Spatial extent of the deepest encoder level.
  int bottleneck_size() const { return input_size >> levels; }
  // Channel count entering decoder block 0 and leaving block j.
  int decoder_input_channels() const;
  int decoder_channels(int block) const;
  int encoder_channels(int level) const { return base_channels << level; }

  bool operator==(const NetworkConfig&) const = default;
};

// Throws ValidationError naming the failing constraint.
void validate(const NetworkConfig& cfg);

template <typename T>
struct ModelState {
  NetworkConfig config;
  ParamStore<T> params;
};

// Seeded fan-in uniform initialization. Each parameter draws from its own
// stream keyed by (seed, name), so configurations that share a parameter
// name and shape share its initial value.
ModelState<float> build(const NetworkConfig& cfg, std::uint64_t seed);

template <typename To, typename From>
ModelState<To> cast_model(const ModelState<From>& m);

// Encoder levels 1..levels (index 0 holds level 1) and the 3D bottleneck.
template <typename T>
struct FeaturePyramid {
  tensor::Tensor<T> input;               // [1,S,S]
  std::vector<tensor::Tensor<T>> levels;  // [C_l, S/2^l, S/2^l]
  tensor::Tensor<T> bottleneck;          // 3D decoder seed
};

template <typename T>
FeaturePyramid<T> encode(const ModelState<T>& model, const tensor::Tensor<T>& projection);

// [C,h,w] -> [C/h, h, h, w]: channel c*h + d becomes channel c, depth d.
template <typename T>
tensor::Tensor<T> bottleneck_2d_to_3d(const tensor::Tensor<T>& feature2d);

// Attention-enhanced calibration of a 2D skip feature for a cubic decoder
// level: conv block to `target_channels`, channel self-attention with a
// learnable residual gate, replication over `depth` slices. `prefix` names
// the parameter group (for example "recon.aec.2").
template <typename T>
tensor::Tensor<T> aec_calibrate(const ModelState<T>& model, const std::string& prefix,
                                const tensor::Tensor<T>& feature2d, std::int64_t target_channels,
                                std::int64_t depth);

enum class Branch { Recon, Seg };

template <typename T>
struct DecodeResult {
  tensor::Tensor<T> output;    // recon [1,S,S,S] or seg probabilities [2,S,S,S]
  tensor::Tensor<T> features;  // pre-head feature map
};

template <typename T>
DecodeResult<T> decode(const ModelState<T>& model, const FeaturePyramid<T>& pyramid, Branch branch);

// U = 1 - exp(1 - m/(1-m)), m = clamp(max(m1,m2), 0.5, 1-1e-6); the result
// is kept strictly below 1.
template <typename T>
tensor::Tensor<T> uncertainty_map(const tensor::Tensor<T>& m1, const tensor::Tensor<T>& m2);

// Scalar form of the map above (same clamping).
double uncertainty_value(double m1, double m2);

// Returns refined probabilities [2,S,S,S].
template <typename T>
tensor::Tensor<T> ure_refine(const ModelState<T>& model, const tensor::Tensor<T>& seg_features,
                             const tensor::Tensor<T>& m1, const tensor::Tensor<T>& m2);

template <typename T>
struct ForwardResult {
  tensor::Tensor<T> recon;        // [1,S,S,S]
  tensor::Tensor<T> seg;          // final probabilities, undefined without the seg branch
  tensor::Tensor<T> seg_initial;  // pre-refinement probabilities
};

template <typename T>
ForwardResult<T> forward(const ModelState<T>& model, const tensor::Tensor<T>& projection);

}  // namespace rtsrts::network

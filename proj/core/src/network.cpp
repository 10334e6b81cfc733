#include "rtsrts/network.hpp"

#include <cmath>
#include <random>

#include "rtsrts/error.hpp"

namespace rtsrts::network {

using tensor::Shape;
using tensor::Tensor;

std::string to_string(BottleneckMode m) { return m == BottleneckMode::Reshape ? "reshape" : "replicate"; }

BottleneckMode bottleneck_from_string(const std::string& s) {
  if (s == "reshape") return BottleneckMode::Reshape;
  if (s == "replicate") return BottleneckMode::Replicate;
  throw ValidationError("unknown bottleneck mode '" + s + "' (expected reshape|replicate)");
}

int NetworkConfig::decoder_input_channels() const {
  const int deepest = encoder_channels(levels - 1);
  const int h = bottleneck_size();
  return bottleneck == BottleneckMode::Reshape ? deepest / h : deepest;
}

int NetworkConfig::decoder_channels(int block) const { return decoder_input_channels() >> (block + 1); }

void validate(const NetworkConfig& c) {
  if (c.levels < 1 || c.levels > 8) throw ValidationError("network.levels must lie in [1,8]");
  if (c.input_size < 1 || c.input_size % (1 << c.levels) != 0) {
    throw ValidationError("network.input_size " + std::to_string(c.input_size) + " must be divisible by 2^levels = " +
                          std::to_string(1 << c.levels));
  }
  if (c.base_channels < 1) throw ValidationError("network.base_channels must be positive");
  if (!(c.leaky_slope >= 0.0 && c.leaky_slope < 1.0)) throw ValidationError("network.leaky_slope must lie in [0,1)");
  const int deepest = c.encoder_channels(c.levels - 1);
  const int h = c.bottleneck_size();
  if (c.bottleneck == BottleneckMode::Reshape && deepest % h != 0) {
    throw ValidationError("bottleneck channels " + std::to_string(deepest) + " not divisible by depth " +
                          std::to_string(h));
  }
  if (c.decoder_input_channels() % (1 << c.levels) != 0) {
    throw ValidationError("decoder input channels " + std::to_string(c.decoder_input_channels()) +
                          " must be divisible by 2^levels so every decoder block keeps >= 1 channel");
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Builder {
  ParamStore<float>& store;
  std::uint64_t seed;

  void uniform(const std::string& name, Shape shape, double fan_in) {
    std::mt19937_64 rng(splitmix64(seed ^ fnv1a(name)));
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<float> v(static_cast<std::size_t>(tensor::numel(shape)));
    for (auto& x : v) x = static_cast<float>(dist(rng));
    store.add(name, Tensor<float>::from(std::move(shape), std::move(v)));
  }
  void constant(const std::string& name, Shape shape, float value) {
    store.add(name, Tensor<float>::full(std::move(shape), value));
  }
  void norm(const std::string& prefix, std::int64_t c) {
    constant(prefix + ".g", {c}, 1.0f);
    constant(prefix + ".b", {c}, 0.0f);
  }
};

bool norm_applies(std::int64_t spatial_count) { return spatial_count >= 2; }

std::string level_prefix(const char* group, int i) { return std::string(group) + "." + std::to_string(i); }

const char* branch_name(Branch b) { return b == Branch::Recon ? "recon" : "seg"; }

template <typename T>
const Tensor<T>& P(const ModelState<T>& m, const std::string& name) {
  return m.params.at(name);
}

template <typename T>
T slope(const ModelState<T>& m) {
  return static_cast<T>(m.config.leaky_slope);
}

template <typename T>
Tensor<T> norm_act(const ModelState<T>& m, const std::string& prefix, const Tensor<T>& x, bool activate) {
  Tensor<T> y = x;
  if (m.params.contains(prefix + ".g")) y = tensor::instance_norm(x, P(m, prefix + ".g"), P(m, prefix + ".b"));
  return activate ? tensor::leaky_relu(y, slope(m)) : y;
}

// Source of the skip connection feeding decoder block j.
template <typename T>
const Tensor<T>& skip_source(const FeaturePyramid<T>& p, int levels, int block) {
  const int level = levels - 2 - block;
  return level >= 0 ? p.levels[static_cast<std::size_t>(level)] : p.input;
}

}  // namespace

ModelState<float> build(const NetworkConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  ModelState<float> m;
  m.config = cfg;
  Builder b{m.params, seed};

  std::int64_t cin = 1;
  std::int64_t size = cfg.input_size;
  for (int l = 0; l < cfg.levels; ++l) {
    const std::int64_t cout = cfg.encoder_channels(l);
    size /= 2;
    const auto p = level_prefix("enc", l);
    const bool norm = norm_applies(size * size);
    b.uniform(p + ".conv1.w", {cout, cin, 3, 3}, double(cin * 9));
    if (norm) b.norm(p + ".in1", cout);
    b.uniform(p + ".conv2.w", {cout, cout, 3, 3}, double(cout * 9));
    if (norm) b.norm(p + ".in2", cout);
    b.uniform(p + ".short.w", {cout, cin, 1, 1}, double(cin));
    b.uniform(p + ".short.b", {cout}, double(cin));
    cin = cout;
  }

  // Channel counts of the 2D skip sources, indexed like skip_source.
  auto skip_channels = [&](int block) -> std::int64_t {
    const int level = cfg.levels - 2 - block;
    return level >= 0 ? cfg.encoder_channels(level) : 1;
  };

  std::vector<Branch> branches{Branch::Recon};
  if (cfg.enable_seg_branch) branches.push_back(Branch::Seg);
  for (Branch br : branches) {
    const std::string name = branch_name(br);
    std::int64_t c = cfg.decoder_input_channels();
    for (int j = 0; j < cfg.levels; ++j) {
      const std::int64_t co = cfg.decoder_channels(j);
      const auto p = name + ".dec." + std::to_string(j);
      b.uniform(p + ".up.w", {c, co, 4, 4, 4}, double(c * 8));
      b.norm(p + ".up_in", co);
      std::int64_t conv_in = co;
      if (cfg.enable_aec) {
        const auto a = name + ".aec." + std::to_string(j);
        const std::int64_t src = skip_channels(j);
        b.uniform(a + ".conv.w", {co, src, 3, 3}, double(src * 9));
        if (cfg.aec_norm) {
          b.norm(a + ".in", co);
        } else {
          b.uniform(a + ".conv.b", {co}, double(src * 9));
        }
        b.constant(a + ".gamma", {1}, static_cast<float>(cfg.attention_residual_init));
        conv_in += co;
      }
      b.uniform(p + ".conv.w", {co, conv_in, 3, 3, 3}, double(conv_in * 27));
      b.norm(p + ".conv_in", co);
      c = co;
    }
    const std::int64_t head_out = br == Branch::Recon ? 1 : 2;
    b.uniform(name + ".head.w", {head_out, c, 1, 1, 1}, double(c));
    b.uniform(name + ".head.b", {head_out}, double(c));
  }
  if (cfg.enable_seg_branch && cfg.enable_ure) {
    const std::int64_t f = cfg.decoder_channels(cfg.levels - 1);
    b.uniform("ure.conv.w", {f, f, 3, 3, 3}, double(f * 27));
    b.uniform("ure.conv.b", {f}, double(f * 27));
    b.uniform("ure.head.w", {2, f, 1, 1, 1}, double(f));
    b.uniform("ure.head.b", {2}, double(f));
  }
  return m;
}

template <typename To, typename From>
ModelState<To> cast_model(const ModelState<From>& m) {
  return ModelState<To>{m.config, m.params.template cast<To>()};
}

template <typename T>
FeaturePyramid<T> encode(const ModelState<T>& m, const Tensor<T>& projection) {
  const auto& cfg = m.config;
  const std::int64_t s = cfg.input_size;
  if (!projection.defined() || projection.shape() != Shape{1, s, s}) {
    throw ShapeError("encode: expected projection shape [1, " + std::to_string(s) + ", " + std::to_string(s) +
                     "], got " + (projection.defined() ? tensor::to_string(projection.shape()) : "undefined"));
  }
  FeaturePyramid<T> out;
  out.input = projection;
  Tensor<T> x = projection;
  for (int l = 0; l < cfg.levels; ++l) {
    const auto p = level_prefix("enc", l);
    Tensor<T> h = tensor::conv2d(x, P(m, p + ".conv1.w"), 2, 1);
    h = norm_act(m, p + ".in1", h, true);
    h = tensor::conv2d(h, P(m, p + ".conv2.w"), 1, 1);
    h = norm_act(m, p + ".in2", h, false);
    Tensor<T> sc = tensor::add_channel_bias(tensor::conv2d(x, P(m, p + ".short.w"), 2, 0), P(m, p + ".short.b"));
    x = tensor::leaky_relu(tensor::add(h, sc), slope(m));
    out.levels.push_back(x);
  }
  if (cfg.bottleneck == BottleneckMode::Reshape) {
    out.bottleneck = bottleneck_2d_to_3d(x);
  } else {
    out.bottleneck = tensor::repeat_depth(x, x.dim(1));
  }
  return out;
}

template <typename T>
Tensor<T> bottleneck_2d_to_3d(const Tensor<T>& f) {
  if (!f.defined() || f.rank() != 3) throw ShapeError("bottleneck_2d_to_3d: expected [C,h,w]");
  const std::int64_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  if (h != w) throw ShapeError("bottleneck_2d_to_3d: feature map must be square, got " + tensor::to_string(f.shape()));
  if (c % h != 0) {
    throw ShapeError("bottleneck_2d_to_3d: channels " + std::to_string(c) + " not divisible by " + std::to_string(h));
  }
  return tensor::reshape(f, {c / h, h, h, w});
}

template <typename T>
Tensor<T> aec_calibrate(const ModelState<T>& m, const std::string& prefix, const Tensor<T>& feature2d,
                        std::int64_t target_channels, std::int64_t depth) {
  if (!feature2d.defined() || feature2d.rank() != 3) throw ShapeError("aec_calibrate: expected [C,H,W] input");
  const std::int64_t h = feature2d.dim(1), w = feature2d.dim(2);
  if (h != w || depth != h) {
    throw ShapeError("aec_calibrate: target must be cubic, got depth " + std::to_string(depth) + " for " +
                     tensor::to_string(feature2d.shape()));
  }
  const auto& kernel = P(m, prefix + ".conv.w");
  if (kernel.dim(0) != target_channels) {
    throw ShapeError("aec_calibrate: " + prefix + " produces " + std::to_string(kernel.dim(0)) + " channels, " +
                     std::to_string(target_channels) + " requested");
  }
  Tensor<T> x = tensor::conv2d(feature2d, kernel, 1, 1);
  if (m.params.contains(prefix + ".conv.b")) x = tensor::add_channel_bias(x, P(m, prefix + ".conv.b"));
  x = norm_act(m, prefix + ".in", x, true);

  const Tensor<T> flat = tensor::reshape(x, {target_channels, h * w});
  const Tensor<T> affinity = tensor::softmax_rows(tensor::matmul(flat, tensor::transpose(flat)));
  const Tensor<T> attended = tensor::matmul(affinity, flat);
  const Tensor<T> out2d = tensor::add(tensor::scale(attended, P(m, prefix + ".gamma")), flat);
  return tensor::repeat_depth(tensor::reshape(out2d, {target_channels, h, w}), depth);
}

template <typename T>
DecodeResult<T> decode(const ModelState<T>& m, const FeaturePyramid<T>& pyramid, Branch branch) {
  const auto& cfg = m.config;
  if (branch == Branch::Seg && !cfg.enable_seg_branch) {
    throw ValidationError("decode: segmentation branch is disabled in this configuration");
  }
  const std::string name = branch_name(branch);
  Tensor<T> x = pyramid.bottleneck;
  for (int j = 0; j < cfg.levels; ++j) {
    const auto p = name + ".dec." + std::to_string(j);
    x = tensor::conv_transpose3d(x, P(m, p + ".up.w"), 2, 1, 0);
    x = norm_act(m, p + ".up_in", x, true);
    if (cfg.enable_aec) {
      const auto& src = skip_source(pyramid, cfg.levels, j);
      Tensor<T> skip = aec_calibrate(m, name + ".aec." + std::to_string(j), src, x.dim(0), x.dim(1));
      x = tensor::concat_channels<T>({x, skip});
    }
    x = tensor::conv3d(x, P(m, p + ".conv.w"), 1, 1);
    x = norm_act(m, p + ".conv_in", x, true);
  }
  DecodeResult<T> out;
  out.features = x;
  Tensor<T> logits = tensor::add_channel_bias(tensor::conv3d(x, P(m, name + ".head.w"), 1, 0), P(m, name + ".head.b"));
  out.output = branch == Branch::Recon ? tensor::sigmoid(logits) : tensor::softmax_channel(logits);
  return out;
}

double uncertainty_value(double m1, double m2) {
  const double m = std::clamp(std::max(m1, m2), 0.5, 1.0 - 1e-6);
  return std::min(0.0 - std::expm1(1.0 - m / (1.0 - m)), std::nextafter(1.0, 0.0));
}

template <typename T>
Tensor<T> uncertainty_map(const Tensor<T>& m1, const Tensor<T>& m2) {
  const Tensor<T> m = tensor::clamp(tensor::maximum(m1, m2), T(0.5), T(1.0 - 1e-6));
  const T below_one = std::nextafter(T(1), T(0));
  return tensor::unary<T>(
      m,
      [below_one](T v) {
        const double r = 0.0 - std::expm1(1.0 - double(v) / (1.0 - double(v)));
        return std::min(static_cast<T>(r), below_one);
      },
      [](T v) {
        // dU/dm = exp(1 - m/(1-m)) / (1-m)^2
        const double d = 1.0 - double(v);
        return static_cast<T>(std::exp(1.0 - double(v) / d) / (d * d));
      },
      "uncertainty_map");
}

template <typename T>
Tensor<T> ure_refine(const ModelState<T>& m, const Tensor<T>& features, const Tensor<T>& m1, const Tensor<T>& m2) {
  if (!m.config.enable_ure || !m.params.contains("ure.conv.w")) {
    throw ValidationError("ure_refine: refinement is disabled in this configuration");
  }
  if (features.rank() != 4 || m1.shape() != m2.shape() || m1.rank() != 4 || m1.dim(0) != 1 ||
      Shape(features.shape().begin() + 1, features.shape().end()) != Shape(m1.shape().begin() + 1, m1.shape().end())) {
    throw ShapeError("ure_refine: features " + tensor::to_string(features.shape()) + " and probabilities " +
                     tensor::to_string(m1.shape()) + " disagree");
  }
  const Tensor<T> u = uncertainty_map(m1, m2);
  Tensor<T> refined = tensor::add_channel_bias(tensor::conv3d(tensor::mul_channel_map(features, u), P(m, "ure.conv.w"), 1, 1),
                                               P(m, "ure.conv.b"));
  refined = tensor::add(refined, features);
  const Tensor<T> logits =
      tensor::add_channel_bias(tensor::conv3d(refined, P(m, "ure.head.w"), 1, 0), P(m, "ure.head.b"));
  return tensor::softmax_channel(logits);
}

template <typename T>
ForwardResult<T> forward(const ModelState<T>& m, const Tensor<T>& projection) {
  const auto pyramid = encode(m, projection);
  ForwardResult<T> out;
  out.recon = decode(m, pyramid, Branch::Recon).output;
  if (m.config.enable_seg_branch) {
    const auto seg = decode(m, pyramid, Branch::Seg);
    out.seg_initial = seg.output;
    if (m.config.enable_ure) {
      const Tensor<T> m1 = tensor::slice_channels(seg.output, 0, 1);
      const Tensor<T> m2 = tensor::slice_channels(seg.output, 1, 2);
      out.seg = ure_refine(m, seg.features, m1, m2);
    } else {
      out.seg = seg.output;
    }
  }
  return out;
}

#define RTSRTS_NETWORK_INSTANTIATE(T)                                                                      \
  template FeaturePyramid<T> encode(const ModelState<T>&, const Tensor<T>&);                              \
  template Tensor<T> bottleneck_2d_to_3d(const Tensor<T>&);                                               \
  template Tensor<T> aec_calibrate(const ModelState<T>&, const std::string&, const Tensor<T>&, std::int64_t, \
                                   std::int64_t);                                                         \
  template DecodeResult<T> decode(const ModelState<T>&, const FeaturePyramid<T>&, Branch);                \
  template Tensor<T> uncertainty_map(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> ure_refine(const ModelState<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template ForwardResult<T> forward(const ModelState<T>&, const Tensor<T>&);

RTSRTS_NETWORK_INSTANTIATE(float)
RTSRTS_NETWORK_INSTANTIATE(double)

template ModelState<double> cast_model(const ModelState<float>&);
template ModelState<float> cast_model(const ModelState<double>&);
template ModelState<float> cast_model(const ModelState<float>&);

}  // namespace rtsrts::network

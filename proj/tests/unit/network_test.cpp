#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>

#include "oracles.hpp"
#include "rtsrts/checkpoint.hpp"
#include "rtsrts/error.hpp"
#include "rtsrts/network.hpp"

using namespace rtsrts;
using network::NetworkConfig;
using tensor::Shape;
using TD = tensor::Tensor<double>;
using TF = tensor::Tensor<float>;

namespace {

NetworkConfig small_config(int size = 32, int base = 4) {
  NetworkConfig c;
  c.input_size = size;
  c.base_channels = base;
  return c;
}

TF projection(int size, double phase) {
  std::vector<float> v(static_cast<std::size_t>(size * size));
  for (int j = 0; j < size; ++j)
    for (int i = 0; i < size; ++i) v[j * size + i] = float(0.5 + 0.5 * std::sin(0.3 * i + phase) * std::cos(0.2 * j));
  return TF::from({1, size, size}, v);
}

TD weighted_sum(const TD& y, std::uint64_t seed) {
  return tensor::sum(tensor::mul(y, oracle::random_tensor(y.shape(), seed, false)));
}

// Finite-difference check of `f` w.r.t. `coords` random coordinates of each
// named parameter (64-bit replay).
double param_grad_check(network::ModelState<double>& m, const std::vector<std::string>& names,
                        const std::function<TD()>& f, std::size_t coords) {
  std::vector<TD> leaves;
  for (const auto& n : names) leaves.push_back(m.params.at(n));
  m.params.zero_grad();
  auto r = oracle::grad_check([&](const std::vector<TD>&) { return f(); }, leaves, 1e-6, 1e-6, coords, 5);
  return r.worst_rel;
}

}  // namespace

TEST(NetworkConfig, LaddersForSize128) {
  NetworkConfig c = small_config(128, 8);
  EXPECT_NO_THROW(network::validate(c));
  EXPECT_EQ(c.bottleneck_size(), 4);
  EXPECT_EQ(c.output_size(), 128);
  tensor::NoGradGuard g;
  const auto m = network::build(c, 1);
  const auto p = network::encode(m, projection(128, 0.0));
  const std::int64_t expect[] = {64, 32, 16, 8, 4};
  for (int l = 0; l < 5; ++l) {
    EXPECT_EQ(p.levels[l].shape(), (Shape{8 << l, expect[l], expect[l]}));
  }
  EXPECT_EQ(p.bottleneck.shape(), (Shape{32, 4, 4, 4}));
  // Decoder ladder 8, 16, 32, 64, 128 is implied by the transposed-conv kernels.
  std::int64_t size = 4;
  for (int j = 0; j < 5; ++j) {
    size *= 2;
    EXPECT_EQ(m.params.at("recon.dec." + std::to_string(j) + ".up.w").dim(1), c.decoder_channels(j));
  }
  EXPECT_EQ(size, 128);
}

TEST(NetworkConfig, RejectsBadShapes) {
  NetworkConfig c = small_config(48, 4);
  EXPECT_THROW(network::validate(c), ValidationError);
  c = small_config(32, 4);
  c.levels = 0;
  EXPECT_THROW(network::validate(c), ValidationError);
  c = small_config(64, 1);  // 16 channels at 2x2 -> 8, not divisible by 32
  EXPECT_THROW(network::validate(c), ValidationError);
}

TEST(Build, DeterministicAndSeeded) {
  const auto a = network::build(small_config(), 3), b = network::build(small_config(), 3);
  EXPECT_EQ(a.params.scalar_count(), b.params.scalar_count());
  EXPECT_EQ(a.params.checksum(), b.params.checksum());
  EXPECT_NE(network::build(small_config(), 4).params.checksum(), a.params.checksum());
}

TEST(Build, AblationRowsDifferOnlyByNamedSubmodules) {
  const auto name_set = [](const NetworkConfig& c) {
    auto n = network::build(c, 1).params.names();
    return std::set<std::string>(n.begin(), n.end());
  };
  NetworkConfig base = small_config();
  base.enable_seg_branch = false;
  base.enable_aec = false;
  base.enable_ure = false;
  NetworkConfig seg = base;
  seg.enable_seg_branch = true;
  NetworkConfig aec = seg;
  aec.enable_aec = true;
  NetworkConfig ure = aec;
  ure.enable_ure = true;

  const auto s0 = name_set(base), s1 = name_set(seg), s2 = name_set(aec), s3 = name_set(ure);
  for (const auto& n : s0) EXPECT_TRUE(s1.count(n));
  for (const auto& n : s1)
    if (!s0.count(n)) EXPECT_EQ(n.rfind("seg.", 0), 0u) << n;
  // The decoder conv widens to take the concatenated skip, so its shape
  // changes while the name set grows only by AEC parameters.
  for (const auto& n : s2)
    if (!s1.count(n)) EXPECT_NE(n.find(".aec."), std::string::npos) << n;
  for (const auto& n : s3)
    if (!s2.count(n)) EXPECT_EQ(n.rfind("ure.", 0), 0u) << n;
  EXPECT_GT(s1.size(), s0.size());
  EXPECT_GT(s3.size(), s2.size());

  // Shared names keep identical initial values across rows.
  const auto m0 = network::build(base, 9), m3 = network::build(ure, 9);
  const auto& a = m0.params.at("enc.2.conv1.w");
  const auto& b = m3.params.at("enc.2.conv1.w");
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(Build, AecDisabledHalvesDecoderConvInput) {
  NetworkConfig on = small_config(), off = small_config();
  off.enable_aec = false;
  const auto mon = network::build(on, 1), moff = network::build(off, 1);
  for (int j = 0; j < 5; ++j) {
    const auto name = "recon.dec." + std::to_string(j) + ".conv.w";
    EXPECT_EQ(mon.params.at(name).dim(1), 2 * moff.params.at(name).dim(1));
  }
}

TEST(Encode, ShapeMapForSize32) {
  const int base = 4;
  tensor::NoGradGuard g;
  const auto m = network::build(small_config(32, base), 1);
  const auto p = network::encode(m, projection(32, 0.0));
  const std::int64_t s[] = {16, 8, 4, 2, 1};
  for (int l = 0; l < 5; ++l) EXPECT_EQ(p.levels[l].shape(), (Shape{base << l, s[l], s[l]}));
  EXPECT_THROW(network::encode(m, projection(16, 0.0)), ShapeError);
}

TEST(Encode, DifferentProjectionsGiveDifferentBottlenecks) {
  tensor::NoGradGuard g;
  const auto m = network::build(small_config(), 1);
  const auto a = network::encode(m, projection(32, 0.0)).bottleneck;
  const auto b = network::encode(m, projection(32, 1.0)).bottleneck;
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(Encode, GradientOfReadout) {
  auto m = network::cast_model<double>(network::build(small_config(32, 2), 1));
  const auto proj = tensor::cast<double>(projection(32, 0.3));
  const double worst = param_grad_check(
      m, {"enc.0.conv1.w", "enc.1.in1.g", "enc.2.conv2.w", "enc.3.short.b", "enc.4.conv1.w"},
      [&] { return weighted_sum(network::encode(m, proj).bottleneck, 3); }, 6);
  EXPECT_LT(worst, 1e-3);
}

TEST(Bottleneck, ReshapeArithmeticAndGradient) {
  auto f = oracle::random_tensor({64, 4, 4}, 2);
  auto y = network::bottleneck_2d_to_3d(f);
  EXPECT_EQ(y.shape(), (Shape{16, 4, 4, 4}));
  double s0 = 0, s1 = 0;
  for (double v : f.values()) s0 += v;
  for (double v : y.values()) s1 += v;
  EXPECT_EQ(s0, s1);
  tensor::backward(tensor::sum(y));
  for (double g : f.grad()) EXPECT_EQ(g, 1.0);
  EXPECT_THROW(network::bottleneck_2d_to_3d(TD::zeros({6, 4, 4})), ShapeError);
}

namespace {

network::ModelState<double> aec_model(std::int64_t c2d, std::int64_t c3d, double gamma) {
  network::ModelState<double> m;
  m.config = small_config();
  m.params.add("t.conv.w", oracle::random_tensor({c3d, c2d, 3, 3}, 41));
  m.params.add("t.in.g", TD::full({c3d}, 1.0, true));
  m.params.add("t.in.b", TD::full({c3d}, 0.0, true));
  m.params.add("t.gamma", TD::full({1}, gamma, true));
  return m;
}

TD compressed(const network::ModelState<double>& m, const TD& f) {
  auto x = tensor::conv2d(f, m.params.at("t.conv.w"), 1, 1);
  x = tensor::instance_norm(x, m.params.at("t.in.g"), m.params.at("t.in.b"));
  return tensor::leaky_relu(x, 0.2);
}

}  // namespace

TEST(Aec, DepthSlicesIdentical) {
  const auto m = aec_model(3, 4, 0.7);
  const auto out = network::aec_calibrate(m, "t", oracle::random_tensor({3, 5, 5}, 1), 4, 5);
  ASSERT_EQ(out.shape(), (Shape{4, 5, 5, 5}));
  for (int c = 0; c < 4; ++c)
    for (int d = 1; d < 5; ++d)
      for (int p = 0; p < 25; ++p) EXPECT_EQ(out.values()[(c * 5 + d) * 25 + p], out.values()[(c * 5) * 25 + p]);
  EXPECT_THROW(network::aec_calibrate(m, "t", oracle::random_tensor({3, 5, 5}, 1), 4, 6), ShapeError);
}

TEST(Aec, ZeroGateReturnsCompressedFeature) {
  const auto m = aec_model(3, 4, 0.0);
  const auto f = oracle::random_tensor({3, 6, 6}, 2);
  const auto out = network::aec_calibrate(m, "t", f, 4, 6);
  const auto x = compressed(m, f);
  for (int c = 0; c < 4; ++c)
    for (int d = 0; d < 6; ++d)
      for (int p = 0; p < 36; ++p) EXPECT_EQ(out.values()[(c * 6 + d) * 36 + p], x.values()[c * 36 + p]);
}

TEST(Aec, SingleChannelScalesByOnePlusGamma) {
  const double gamma = 0.35;
  const auto m = aec_model(2, 1, gamma);
  const auto f = oracle::random_tensor({2, 4, 4}, 3);
  const auto out = network::aec_calibrate(m, "t", f, 1, 4);
  const auto x = compressed(m, f);
  for (int p = 0; p < 16; ++p) EXPECT_NEAR(out.values()[p], (1.0 + gamma) * x.values()[p], 1e-12);
}

TEST(Decode, OutputShapesAndSoftmax) {
  tensor::NoGradGuard g;
  const auto m = network::build(small_config(), 1);
  const auto r = network::forward(m, projection(32, 0.0));
  EXPECT_EQ(r.recon.shape(), (Shape{1, 32, 32, 32}));
  ASSERT_TRUE(r.seg.defined());
  EXPECT_EQ(r.seg.shape(), (Shape{2, 32, 32, 32}));
  const auto n = std::size_t(32 * 32 * 32);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(double(r.seg.values()[i]) + r.seg.values()[n + i], 1.0, 1e-6);
    ASSERT_GE(r.seg.values()[i], 0.0f);
    ASSERT_LE(r.seg.values()[i], 1.0f);
  }
  for (float v : r.recon.values()) ASSERT_TRUE(v > 0.0f && v < 1.0f);
}

TEST(Decode, DisabledBranchRejected) {
  NetworkConfig c = small_config();
  c.enable_seg_branch = false;
  c.enable_ure = false;
  const auto m = network::build(c, 1);
  tensor::NoGradGuard g;
  const auto p = network::encode(m, projection(32, 0.0));
  EXPECT_THROW(network::decode(m, p, network::Branch::Seg), ValidationError);
  const auto r = network::forward(m, projection(32, 0.0));
  EXPECT_TRUE(r.recon.defined());
  EXPECT_FALSE(r.seg.defined());
}

TEST(Decode, GradientThroughFullDecodeAtDeskScale) {
  auto m = network::cast_model<double>(network::build(small_config(32, 16), 2));
  const auto proj = tensor::cast<double>(projection(32, 0.6));
  const auto pyramid = [&] {
    tensor::NoGradGuard g;
    return network::encode(m, proj);
  }();
  const double worst = param_grad_check(
      m, {"recon.dec.0.up.w", "recon.dec.2.conv.w", "recon.aec.3.conv.w", "recon.aec.1.gamma", "recon.dec.4.conv_in.g",
          "recon.head.w"},
      [&] { return weighted_sum(network::decode(m, pyramid, network::Branch::Recon).output, 4); }, 3);
  EXPECT_LT(worst, 1e-3);
}

TEST(Uncertainty, ScalarValues) {
  EXPECT_EQ(network::uncertainty_value(0.5, 0.5), 0.0);
  EXPECT_NEAR(network::uncertainty_value(0.8, 0.2), 1.0 - std::exp(-3.0), 1e-12);
  EXPECT_NEAR(network::uncertainty_value(0.1, 0.9), 0.999665, 1e-6);
  EXPECT_GT(network::uncertainty_value(0.9, 0.1), network::uncertainty_value(0.8, 0.2));
  EXPECT_LT(network::uncertainty_value(1.0, 0.0), 1.0);
  EXPECT_EQ(network::uncertainty_value(0.3, 0.3), 0.0);
}

TEST(Uncertainty, MonotoneWhereResolvable) {
  // Strictly increasing while 1 - U is representable next to 1; beyond
  // m ~ 0.97 the exact values sit within one ulp of 1 and U saturates.
  double prev = -1.0;
  for (int i = 1; i <= 1000; ++i) {
    const double m = 0.5 + (0.5 - 1e-6) * i / 1001.0;
    const double u = network::uncertainty_value(m, 1.0 - m);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    if (m < 0.96) {
      EXPECT_GT(u, prev) << "m=" << m;
    } else {
      EXPECT_GE(u, prev) << "m=" << m;
    }
    prev = u;
  }
}

TEST(Uncertainty, TensorMatchesScalarAndGradient) {
  auto m1 = TD::from({1, 4}, {0.55, 0.3, 0.7, 0.85}, true);
  auto m2 = TD::from({1, 4}, {0.45, 0.7, 0.3, 0.15}, true);
  const auto u = network::uncertainty_map(m1, m2);
  for (int i = 0; i < 4; ++i)
    EXPECT_NEAR(u.values()[i], network::uncertainty_value(m1.values()[i], m2.values()[i]), 1e-15);
  auto r = oracle::grad_check(
      [](const std::vector<TD>& l) { return weighted_sum(network::uncertainty_map(l[0], l[1]), 5); }, {m1, m2});
  EXPECT_LT(r.worst_rel, 1e-4);
}

TEST(Ure, ZeroHeadGivesHalf) {
  auto m = network::build(small_config(), 1);
  for (const char* n : {"ure.conv.w", "ure.conv.b", "ure.head.w", "ure.head.b"})
    for (auto& v : m.params.at(n).mutable_values()) v = 0.0f;
  tensor::NoGradGuard g;
  const auto r = network::forward(m, projection(32, 0.2));
  for (float v : r.seg.values()) ASSERT_EQ(v, 0.5f);
}

TEST(Ure, GradientThroughRefinement) {
  auto cfg = small_config(8, 8);
  cfg.levels = 3;
  auto m = network::cast_model<double>(network::build(cfg, 1));
  const std::int64_t f = cfg.decoder_channels(2);
  auto feats = oracle::random_tensor({f, 8, 8, 8}, 6);
  auto logits = oracle::random_tensor({2, 8, 8, 8}, 7, false, -2.0, 2.0);
  auto probs = tensor::softmax_channel(logits);
  auto m1 = tensor::slice_channels(probs, 0, 1).detach(), m2 = tensor::slice_channels(probs, 1, 2).detach();
  m1.set_requires_grad(true);
  const double w1 = param_grad_check(
      m, {"ure.conv.w", "ure.conv.b", "ure.head.w", "ure.head.b"},
      [&] { return weighted_sum(network::ure_refine(m, feats, m1, m2), 8); }, 8);
  EXPECT_LT(w1, 1e-3);
  auto r = oracle::grad_check(
      [&](const std::vector<TD>& l) {
        // m2 follows m1 so the pair stays a distribution.
        auto other = tensor::sub(TD::full({1, 8, 8, 8}, 1.0), l[1]);
        return weighted_sum(network::ure_refine(m, l[0], l[1], other), 9);
      },
      {feats, m1}, 1e-6, 1e-6, 20, 3);
  EXPECT_LT(r.worst_rel, 1e-3);
}

TEST(Forward, DeterministicAndNoSegRow) {
  tensor::NoGradGuard g;
  const auto m = network::build(small_config(), 5);
  const auto a = network::forward(m, projection(32, 0.1)), b = network::forward(m, projection(32, 0.1));
  EXPECT_TRUE(std::equal(a.recon.values().begin(), a.recon.values().end(), b.recon.values().begin()));
  EXPECT_TRUE(std::equal(a.seg.values().begin(), a.seg.values().end(), b.seg.values().begin()));
}

TEST(Forward, ReplicateBottleneckAlternative) {
  NetworkConfig c = small_config(32, 2);
  c.bottleneck = network::BottleneckMode::Replicate;
  tensor::NoGradGuard g;
  const auto r = network::forward(network::build(c, 1), projection(32, 0.0));
  EXPECT_EQ(r.recon.shape(), (Shape{1, 32, 32, 32}));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  NetworkConfig c = small_config();
  c.attention_residual_init = 0.25;
  const auto m = network::build(c, 11);
  const auto bytes = checkpoint::serialize(m);
  const auto back = checkpoint::deserialize(bytes, "memory");
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.params.names(), m.params.names());
  EXPECT_EQ(back.params.checksum(), m.params.checksum());
  EXPECT_EQ(checkpoint::serialize(back), bytes);
}

TEST(Checkpoint, RejectsCorruption) {
  auto bytes = checkpoint::serialize(network::build(small_config(), 1));
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 5), "RTSC1");
  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x01;
  EXPECT_THROW(checkpoint::deserialize(bad, "memory"), IoError);
  bad = bytes;
  bad.resize(bad.size() - 7);
  EXPECT_THROW(checkpoint::deserialize(bad, "memory"), IoError);
}

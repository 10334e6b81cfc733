#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "rtsrts/error.hpp"
#include "rtsrts/metrics.hpp"

using namespace rtsrts;

namespace {

Grid3 grid(std::int64_t n, double spacing = 1.0) {
  Grid3 g;
  g.dims = {n, n + 1, n - 1};
  g.spacing = {spacing, spacing, spacing * 1.5};
  g.origin = {-3.0, 2.0, 0.5};
  return g;
}

Volume random_volume(const Grid3& g, std::uint64_t seed) {
  Volume v = Volume::filled(g, 0.0f);
  const auto r = oracle::random_values(v.voxels.size(), seed, 0.0, 1.0);
  for (std::size_t i = 0; i < r.size(); ++i) v.voxels[i] = float(r[i]);
  return v;
}

// Smooth volume plus noise, so SSIM sits well inside (0, 1).
Volume textured(const Grid3& g, std::uint64_t seed, double noise) {
  Volume v = random_volume(g, seed);
  for (std::int64_t k = 0; k < g.nz(); ++k)
    for (std::int64_t j = 0; j < g.ny(); ++j)
      for (std::int64_t i = 0; i < g.nx(); ++i) {
        auto& x = v.voxels[g.index(i, j, k)];
        x = float(0.5 + 0.3 * std::sin(0.4 * i) * std::cos(0.3 * j + 0.2 * k) + noise * (x - 0.5));
      }
  return v;
}

Mask ball(const Grid3& g, double cx, double cy, double cz, double r) {
  Mask m = Mask::filled(g, 0);
  for (std::int64_t k = 0; k < g.nz(); ++k)
    for (std::int64_t j = 0; j < g.ny(); ++j)
      for (std::int64_t i = 0; i < g.nx(); ++i)
        if ((i - cx) * (i - cx) + (j - cy) * (j - cy) + (k - cz) * (k - cz) <= r * r) m.voxels[g.index(i, j, k)] = 1;
  return m;
}

}  // namespace

TEST(Metrics, IntensityMetricsMatchOracles) {
  const auto g = grid(9);
  const auto a = random_volume(g, 1), b = random_volume(g, 2);
  long double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    const long double d = (long double)a.voxels[i] - b.voxels[i];
    s1 += std::abs(d);
    s2 += d * d;
  }
  const double n = double(a.voxels.size());
  const double mae = double(s1 / n), mse = double(s2 / n);
  EXPECT_LT(oracle::rel_err(metrics::mae(a, b), mae), 1e-6);
  EXPECT_LT(oracle::rel_err(metrics::mse(a, b), mse), 1e-6);
  EXPECT_LT(oracle::rel_err(metrics::rmse(a, b), std::sqrt(mse)), 1e-6);
  EXPECT_LT(oracle::rel_err(metrics::psnr(a, b), -10.0 * std::log10(mse)), 1e-6);
}

TEST(Metrics, PsnrIdentityAndKnownValue) {
  const auto g = grid(6);
  const auto a = random_volume(g, 3);
  EXPECT_TRUE(std::isinf(metrics::psnr(a, a)));
  EXPECT_EQ(metrics::psnr_from_mse(0.01), 20.0);
}

TEST(Metrics, SsimMatchesDirectWindowOracle) {
  const auto g = grid(14);
  const auto a = textured(g, 4, 0.2), b = textured(g, 5, 0.6);
  const double ref = oracle::ssim(a, b);
  EXPECT_GT(ref, 0.0);
  EXPECT_LT(ref, 0.99);
  EXPECT_LT(oracle::rel_err(metrics::ssim(a, b), ref), 1e-6);
  EXPECT_NEAR(metrics::ssim(a, a), 1.0, 1e-12);
  EXPECT_THROW(metrics::ssim(random_volume(grid(8), 1), random_volume(grid(8), 2)), ValidationError);
}

TEST(Metrics, DiceCases) {
  const auto g = grid(12);
  const auto a = ball(g, 5, 5, 4, 3), b = ball(g, 6, 5, 4, 3);
  EXPECT_EQ(metrics::dice(a, a), 1.0);
  EXPECT_EQ(metrics::dice(Mask::filled(g, 0), Mask::filled(g, 0)), 1.0);
  EXPECT_EQ(metrics::dice(a, Mask::filled(g, 0)), 0.0);
  std::int64_t inter = 0;
  for (std::size_t i = 0; i < a.voxels.size(); ++i) inter += a.voxels[i] && b.voxels[i];
  const double ref = 2.0 * double(inter) / double(a.count() + b.count());
  EXPECT_LT(oracle::rel_err(metrics::dice(a, b), ref), 1e-6);
}

TEST(Metrics, ComdCases) {
  const auto g = grid(12, 2.0);
  const auto a = ball(g, 5, 5, 4, 3);
  EXPECT_EQ(*metrics::comd(a, a), 0.0);
  EXPECT_FALSE(metrics::comd(a, Mask::filled(g, 0)).has_value());
  // A pure voxel shift moves the centroid by exactly that many spacings.
  const auto b = ball(g, 7, 5, 4, 3);
  EXPECT_NEAR(*metrics::comd(a, b), 4.0, 1e-9);
  const auto c = ball(g, 6.3, 4.1, 5.2, 2.5);
  const auto ca = oracle::centroid(a), cc = oracle::centroid(c);
  const double ref = std::sqrt(std::pow((*ca)[0] - (*cc)[0], 2) + std::pow((*ca)[1] - (*cc)[1], 2) +
                               std::pow((*ca)[2] - (*cc)[2], 2));
  EXPECT_NEAR(*metrics::comd(a, c), ref, 1e-9);
  const auto cm = metrics::centroid_mm(a);
  EXPECT_NEAR((*cm)[0], g.origin[0] + 5 * 2.0, 1e-9);
  EXPECT_NEAR((*cm)[2], g.origin[2] + 4 * 3.0, 1e-9);
}

TEST(Metrics, BinarizeTiesGoToBackground) {
  Grid3 g;
  g.dims = {3, 1, 1};
  const auto probs = tensor::Tensor<float>::from({2, 1, 1, 3}, {0.7f, 0.5f, 0.2f, 0.3f, 0.5f, 0.8f});
  const auto m = metrics::binarize_seg(probs, g);
  EXPECT_EQ(m.voxels, (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(Metrics, PerfectPredictionScores) {
  const auto g = grid(12);
  const auto v = textured(g, 6, 0.3);
  const auto m = ball(g, 5, 6, 4, 3);
  const auto r = metrics::score("s1", "eval", v, v, m, m);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_TRUE(std::isinf(r.psnr_db));
  EXPECT_NEAR(r.ssim, 1.0, 1e-12);
  EXPECT_EQ(*r.dice, 1.0);
  EXPECT_EQ(*r.comd_mm, 0.0);
  const auto no_seg = metrics::score("s1", "eval", v, v, std::nullopt, m);
  EXPECT_FALSE(no_seg.dice.has_value());
  EXPECT_FALSE(no_seg.comd_mm.has_value());
}

TEST(Report, AggregatesSkipMissingAndInfinite) {
  metrics::EvalReport rep;
  rep.tag = "eval";
  for (int i = 0; i < 3; ++i) {
    metrics::SampleMetrics r;
    r.sample_id = "s" + std::to_string(i);
    r.tag = "eval";
    r.mae = 0.1 * (i + 1);
    r.psnr_db = i == 0 ? std::numeric_limits<double>::infinity() : 30.0 + i;
    if (i != 1) r.dice = 0.5 + 0.1 * i;
    rep.rows.push_back(r);
  }
  const auto mae = rep.aggregate("mae");
  EXPECT_EQ(mae.count, 3);
  EXPECT_NEAR(mae.mean, 0.2, 1e-15);
  EXPECT_NEAR(mae.std, 0.1, 1e-15);
  EXPECT_EQ(rep.aggregate("psnr_db").count, 2);
  EXPECT_EQ(rep.aggregate("dice").count, 2);
  EXPECT_EQ(rep.aggregate("comd_mm").count, 0);
  EXPECT_THROW(rep.aggregate("bogus"), ValidationError);

  std::istringstream csv(rep.to_csv());
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "sample_id,tag,mae,mse,rmse,psnr_db,ssim,dice,comd_mm");
  EXPECT_NE(lines[1].find(",inf,"), std::string::npos);
  EXPECT_EQ(lines[2].substr(lines[2].size() - 2), ",,");
  EXPECT_EQ(lines[4], "");
  EXPECT_EQ(lines[5].rfind("aggregate_mean,eval,", 0), 0u);
  EXPECT_EQ(lines[6].back(), ',');
}

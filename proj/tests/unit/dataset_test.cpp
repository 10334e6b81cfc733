#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "rtsrts/dataset.hpp"
#include "rtsrts/error.hpp"
#include "rtsrts/phantom.hpp"
#include "rtsrts/rtsv_io.hpp"

using namespace rtsrts;
namespace fs = std::filesystem;

namespace {

// 48 mm phantom at 3 mm, resampled to 1 mm: small enough for many samples.
dataset::DatasetConfig small_config(int n) {
  dataset::DatasetConfig cfg;
  cfg.input_size = 16;
  cfg.output_size = 16;
  cfg.n_samples = n;
  cfg.seed = 77;
  return cfg;
}

const dataset::MotionSource& small_source() {
  static const dataset::MotionSource src = [] {
    Grid3 g;
    g.dims = {16, 16, 16};
    g.spacing = {3.0, 3.0, 3.0};
    g.origin = {-22.5, -22.5, -22.5};
    const auto p = phantom::generate_phantom(phantom::PhantomSpec::for_grid(g, 5));
    return dataset::prepare_source(p, small_config(1));
  }();
  return src;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rtsrts_dataset_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> bytes_of_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::uint8_t> all;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, root).string();
    all.insert(all.end(), rel.begin(), rel.end());
    const auto b = io::read_file(f);
    all.insert(all.end(), b.begin(), b.end());
  }
  return all;
}

Volume ramp_volume() {
  Grid3 g;
  g.dims = {16, 12, 10};
  g.spacing = {1.0, 1.0, 1.0};
  Volume v = Volume::filled(g, 0.0f);
  for (std::int64_t k = 0; k < g.nz(); ++k)
    for (std::int64_t j = 0; j < g.ny(); ++j)
      for (std::int64_t i = 0; i < g.nx(); ++i)
        v.voxels[g.index(i, j, k)] = float(0.02 * i + 0.03 * j - 0.01 * k + 0.4);
  return v;
}

}  // namespace

TEST(Resample, SameSpacingIsIdentity) {
  const auto v = ramp_volume();
  EXPECT_EQ(dataset::resample_isotropic(v, 1.0), v);
}

TEST(Resample, ConstantPreserved) {
  Grid3 g;
  g.dims = {9, 7, 5};
  g.spacing = {3.0, 3.0, 4.0};
  const auto v = Volume::filled(g, 0.37f);
  for (double s : {0.7, 1.0, 2.5}) {
    const auto r = dataset::resample_isotropic(v, s);
    for (float x : r.voxels) EXPECT_NEAR(x, 0.37f, 1e-6);
  }
}

TEST(Resample, RampDownsampleMatchesOracle) {
  const auto v = ramp_volume();
  const auto r = dataset::resample_isotropic(v, 2.0);
  EXPECT_EQ(r.grid.dims, (std::array<std::int64_t, 3>{8, 6, 5}));
  double worst = 0.0;
  for (std::int64_t k = 0; k < r.grid.nz(); ++k)
    for (std::int64_t j = 0; j < r.grid.ny(); ++j)
      for (std::int64_t i = 0; i < r.grid.nx(); ++i) {
        const std::array<double, 3> p{r.grid.origin[0] + 2.0 * i, r.grid.origin[1] + 2.0 * j, r.grid.origin[2] + 2.0 * k};
        worst = std::max(worst, std::abs(oracle::cubic_at(v, p) - r.at(i, j, k)));
      }
  EXPECT_LT(worst, 1e-4);
}

TEST(Resample, ExtentPreservedWithinOneVoxel) {
  Grid3 g;
  g.dims = {32, 32, 24};
  g.spacing = {3.0, 3.0, 4.0};
  const auto t = dataset::isotropic_grid(g, 1.0);
  for (int a = 0; a < 3; ++a) {
    EXPECT_LE(std::abs(t.extent_mm()[a] - g.extent_mm()[a]), 1.0);
    EXPECT_NEAR(t.center_mm()[a], g.center_mm()[a], 1e-9);
  }
}

TEST(Resample, NearestKeepsValueSet) {
  Grid3 g;
  g.dims = {10, 10, 10};
  g.spacing = {3.0, 3.0, 3.0};
  Mask m = Mask::filled(g, 0);
  for (std::size_t i = 0; i < m.voxels.size(); i += 7) m.voxels[i] = 1;
  const auto r = dataset::resample_isotropic(m, 1.3);
  for (auto v : r.voxels) EXPECT_LE(v, 1);
  EXPECT_GT(r.count(), 0);
}

TEST(Splits, FullAndDeskRatios) {
  EXPECT_EQ(dataset::split_counts(1080), (std::array<int, 3>{880, 100, 100}));
  EXPECT_EQ(dataset::split_counts(120), (std::array<int, 3>{98, 11, 11}));
}

TEST(Dataset, SampleInvariants) {
  const auto cfg = small_config(4);
  for (int i = 0; i < 4; ++i) {
    const auto s = dataset::generate_sample(small_source(), cfg, i);
    EXPECT_EQ(s.projection.geometry.nu, 16);
    EXPECT_EQ(s.projection.geometry.nv, 16);
    EXPECT_EQ(s.volume.grid.dims, (std::array<std::int64_t, 3>{16, 16, 16}));
    EXPECT_EQ(s.mask.grid, s.volume.grid);
    EXPECT_GE(s.angle_deg, 0.0);
    EXPECT_LT(s.angle_deg, 360.0);
    EXPECT_EQ(s.coeffs.size(), 3u);
    for (float x : s.projection.pixels) ASSERT_TRUE(x >= 0.0f && x <= 1.0f);
    for (float x : s.volume.voxels) ASSERT_TRUE(x >= 0.0f && x <= 1.0f);
    for (auto x : s.mask.voxels) ASSERT_LE(x, 1);
    EXPECT_GT(s.mask.count(), 0);
  }
}

TEST(Dataset, BuildIsByteIdenticalAndSplitsDisjoint) {
  const auto cfg = small_config(24);
  const auto a = scratch("a"), b = scratch("b");
  const auto ma = dataset::build_dataset(small_source(), cfg, a, "deadbeef");
  dataset::build_dataset(small_source(), cfg, b, "deadbeef");
  EXPECT_EQ(bytes_of_tree(a), bytes_of_tree(b));

  std::set<std::string> ids;
  for (const auto& r : ma.records) EXPECT_TRUE(ids.insert(r.id).second);
  const auto counts = dataset::split_counts(24);
  EXPECT_EQ(ma.split("train").size(), std::size_t(counts[0]));
  EXPECT_EQ(ma.split("val").size(), std::size_t(counts[1]));
  EXPECT_EQ(ma.split("test").size(), std::size_t(counts[2]));

  const auto back = dataset::read_manifest(a);
  EXPECT_EQ(back.config_hash, "deadbeef");
  ASSERT_EQ(back.records.size(), ma.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    EXPECT_EQ(back.records[i].split, ma.records[i].split);
    EXPECT_EQ(back.records[i].angle_deg, ma.records[i].angle_deg);
    EXPECT_EQ(back.records[i].coeffs, ma.records[i].coeffs);
  }
}

TEST(Dataset, PerSampleGenerationIsOrderIndependent) {
  const auto cfg = small_config(10);
  const auto dir = scratch("order");
  const auto m = dataset::build_dataset(small_source(), cfg, dir, "x");
  const auto alone = dataset::generate_sample(small_source(), cfg, 7);
  const auto loaded = dataset::load_sample(m, dataset::sample_id(7));
  EXPECT_EQ(alone.projection, loaded.projection);
  EXPECT_EQ(alone.volume, loaded.volume);
  EXPECT_EQ(alone.mask, loaded.mask);
  EXPECT_EQ(alone.coeffs, loaded.coeffs);
}

TEST(Dataset, FixedAngleChangesOnlyProjections) {
  const auto cfg = small_config(6);
  const auto d0 = scratch("fixed0"), d90 = scratch("fixed90");
  const auto m0 = dataset::build_fixed_angle_dataset(small_source(), cfg, d0, "x", 0.0);
  const auto m90 = dataset::build_fixed_angle_dataset(small_source(), cfg, d90, "x", 90.0);
  for (std::size_t i = 0; i < m0.records.size(); ++i) {
    EXPECT_EQ(m0.records[i].angle_deg, 0.0);
    EXPECT_EQ(m90.records[i].angle_deg, 90.0);
    EXPECT_EQ(m0.records[i].split, m90.records[i].split);
    const auto a = dataset::load_sample(m0, m0.records[i].id), b = dataset::load_sample(m90, m90.records[i].id);
    EXPECT_EQ(a.volume, b.volume);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_NE(a.projection.pixels, b.projection.pixels);
  }
  EXPECT_EQ(dataset::split_counts(1080), (std::array<int, 3>{880, 100, 100}));
}

TEST(Dataset, LoadRejectsCorruptionAndNonBinaryMask) {
  const auto cfg = small_config(3);
  const auto dir = scratch("corrupt");
  const auto m = dataset::build_dataset(small_source(), cfg, dir, "x");
  const auto& r = m.records[1];

  auto body = dir / fs::path(r.vol_path).replace_extension(".raw");
  auto bytes = io::read_file(body);
  bytes[17] ^= 0x40;
  io::write_file(body, bytes);
  try {
    dataset::load_sample(m, r.id);
    FAIL() << "expected a checksum error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(r.id), std::string::npos) << e.what();
  }

  const auto& r2 = m.records[2];
  const auto good = io::read_mask(dir / r2.mask_path);
  io::RtsvHeader h;
  h.dims = {good.grid.dims[0], good.grid.dims[1], good.grid.dims[2]};
  h.spacing_mm = {good.grid.spacing.begin(), good.grid.spacing.end()};
  h.origin_mm = {good.grid.origin.begin(), good.grid.origin.end()};
  h.dtype = "u8";
  auto vox = good.voxels;
  vox[5] = 2;
  io::write_rtsv(dir / r2.mask_path, h, vox);
  EXPECT_THROW(dataset::load_sample(m, r2.id), IoError);
}

TEST(Dataset, LoadRoundTripIsBitExact) {
  const auto cfg = small_config(2);
  const auto dir = scratch("roundtrip");
  const auto m = dataset::build_dataset(small_source(), cfg, dir, "x");
  const auto s = dataset::generate_sample(small_source(), cfg, 1);
  const auto back = dataset::load_sample(dataset::read_manifest(dir), s.id);
  EXPECT_EQ(back.projection, s.projection);
  EXPECT_EQ(back.volume, s.volume);
  EXPECT_EQ(back.mask, s.mask);
  EXPECT_EQ(back.angle_deg, s.angle_deg);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rtsrts/error.hpp"
#include "rtsrts/projector.hpp"

using namespace rtsrts;

namespace {

// Unit-density cube of `side` voxels at 1 mm centered in an n^3 grid.
Volume cube_volume(int n, int side) {
  Grid3 g;
  g.dims = {n, n, n};
  Volume v = Volume::filled(g, 0.0f);
  const int lo = (n - side) / 2;
  for (int k = lo; k < lo + side; ++k)
    for (int j = lo; j < lo + side; ++j)
      for (int i = lo; i < lo + side; ++i) v.voxels[g.index(i, j, k)] = 1.0f;
  return v;
}

Volume smooth_volume(const Grid3& g, double phase) {
  Volume v = Volume::filled(g, 0.0f);
  for (std::int64_t k = 0; k < g.nz(); ++k)
    for (std::int64_t j = 0; j < g.ny(); ++j)
      for (std::int64_t i = 0; i < g.nx(); ++i)
        v.voxels[g.index(i, j, k)] =
            float(0.5 + 0.4 * std::sin(0.3 * i + phase) * std::cos(0.2 * j - 0.5 * phase) * std::cos(0.25 * k));
  return v;
}

// Independent fine-step midpoint integrator of a parallel ray through the
// volume, 8-corner trilinear with clamped coordinates.
double fine_parallel_ray(const Volume& v, double angle_deg, double u, double w, double step) {
  const auto& g = v.grid;
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double d[3] = {std::cos(a), std::sin(a), 0.0};
  const auto c = g.center_mm();
  const double p0[3] = {c[0] - std::sin(a) * u, c[1] + std::cos(a) * u, c[2] + w};
  const double reach = 2.0 * g.extent_mm()[0] + 2.0 * g.extent_mm()[1];
  double acc = 0.0;
  for (double t = -reach + 0.5 * step; t < reach; t += step) {
    double q[3], lo_ok = true;
    for (int ax = 0; ax < 3; ++ax) {
      q[ax] = p0[ax] + t * d[ax];
      const double lo = g.origin[ax] - 0.5 * g.spacing[ax];
      const double hi = g.origin[ax] + (g.dims[ax] - 0.5) * g.spacing[ax];
      if (q[ax] < lo || q[ax] > hi) lo_ok = false;
    }
    if (!lo_ok) continue;
    acc += oracle::trilinear(v, (q[0] - g.origin[0]) / g.spacing[0], (q[1] - g.origin[1]) / g.spacing[1],
                             (q[2] - g.origin[2]) / g.spacing[2]);
  }
  return acc * step;
}

}  // namespace

TEST(RenderDrr, AxisAlignedCubePathLength) {
  const auto v = cube_volume(80, 64);
  for (double angle : {0.0, 90.0}) {
    const auto geom = fit_detector(v.grid, angle, Beam::Parallel, 1.0);
    const auto p = render_drr(v, geom);
    // Pixels whose rays run at least two voxels inside the cube faces.
    const double c_u = 0.5 * double(geom.nu - 1), c_v = 0.5 * double(geom.nv - 1);
    int checked = 0;
    for (std::int64_t iv = 0; iv < geom.nv; ++iv)
      for (std::int64_t iu = 0; iu < geom.nu; ++iu) {
        if (std::abs(iu - c_u) > 29.0 || std::abs(iv - c_v) > 29.0) continue;
        EXPECT_NEAR(p.at(iu, iv), 64.0, 0.005 * 64.0);
        ++checked;
      }
    EXPECT_GT(checked, 2500);
  }
}

TEST(RenderDrr, ObliqueCubeMatchesFineStepOracle) {
  const auto v = cube_volume(40, 24);
  const auto geom = fit_detector(v.grid, 45.0, Beam::Parallel, 1.0);
  const auto p = render_drr(v, geom);
  for (std::int64_t iu = 0; iu < geom.nu; iu += 3) {
    const std::int64_t iv = geom.nv / 2;
    const double u = (double(iu) - 0.5 * double(geom.nu - 1)) * geom.du;
    const double w = (double(iv) - 0.5 * double(geom.nv - 1)) * geom.dv;
    const double ref = fine_parallel_ray(v, 45.0, u, w, 0.05);
    if (ref < 1.0) continue;
    EXPECT_NEAR(p.at(iu, iv), ref, 0.005 * ref) << "iu=" << iu;
  }
}

TEST(RenderDrr, ParallelMirrorSymmetry) {
  Grid3 g;
  g.dims = {20, 18, 12};
  g.spacing = {1.5, 1.5, 2.0};
  const auto v = smooth_volume(g, 0.7);
  for (double angle : {0.0, 37.0, 90.0, 151.0}) {
    const auto geom = fit_detector(g, angle, Beam::Parallel, 1.0);
    auto geom2 = geom;
    geom2.angle_deg = angle + 180.0;
    const auto a = render_drr(v, geom), b = render_drr(v, geom2);
    double worst = 0.0;
    for (std::int64_t iv = 0; iv < geom.nv; ++iv)
      for (std::int64_t iu = 0; iu < geom.nu; ++iu)
        worst = std::max(worst, double(std::abs(a.at(iu, iv) - b.at(geom.nu - 1 - iu, iv))));
    EXPECT_LT(worst, 1e-4) << "angle " << angle;
  }
}

TEST(RenderDrr, StepHalvingConverges) {
  Grid3 g;
  g.dims = {24, 24, 16};
  g.spacing = {2.0, 2.0, 3.0};
  const auto v = smooth_volume(g, 0.2);
  const auto geom = fit_detector(g, 23.0, Beam::Parallel, 2.0);
  const auto a = render_drr(v, geom), b = render_drr(v, geom, 0.5);
  float peak = 0.0f;
  for (float x : a.pixels) peak = std::max(peak, x);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    if (a.pixels[i] < 0.05f * peak) continue;
    EXPECT_LT(std::abs(a.pixels[i] - b.pixels[i]) / a.pixels[i], 0.002);
  }
}

TEST(RenderDrr, LinearInVolume) {
  Grid3 g;
  g.dims = {12, 10, 8};
  g.spacing = {2.0, 2.0, 2.0};
  const auto v1 = smooth_volume(g, 0.1), v2 = smooth_volume(g, 1.3);
  Volume mix = v1;
  for (std::size_t i = 0; i < mix.voxels.size(); ++i) mix.voxels[i] = 0.25f * v1.voxels[i] + 0.5f * v2.voxels[i];
  const auto geom = fit_detector(g, 62.0, Beam::Parallel, 1.0);
  const auto p1 = render_drr(v1, geom), p2 = render_drr(v2, geom), pm = render_drr(mix, geom);
  float peak = 0.0f;
  for (float x : pm.pixels) peak = std::max(peak, x);
  for (std::size_t i = 0; i < pm.pixels.size(); ++i)
    EXPECT_NEAR(pm.pixels[i], 0.25f * p1.pixels[i] + 0.5f * p2.pixels[i], 1e-5 * std::max(1.0f, peak));
}

TEST(RenderDrr, ConeBeamFiniteAndNonNegative) {
  Grid3 g;
  g.dims = {16, 16, 12};
  g.spacing = {3.0, 3.0, 4.0};
  const auto geom = fit_detector(g, 120.0, Beam::Cone, 1.5);
  const auto p = render_drr(smooth_volume(g, 0.4), geom);
  float peak = 0.0f;
  for (float x : p.pixels) {
    ASSERT_TRUE(std::isfinite(x));
    ASSERT_GE(x, 0.0f);
    peak = std::max(peak, x);
  }
  EXPECT_GT(peak, 0.0f);
}

TEST(RenderDrr, RejectsDegenerateGeometry) {
  Grid3 g;
  g.dims = {8, 8, 8};
  const auto v = Volume::filled(g, 1.0f);
  auto geom = fit_detector(g, 0.0, Beam::Parallel, 1.0);
  auto bad = geom;
  bad.nu = 2;
  EXPECT_THROW(render_drr(v, bad), ValidationError);
  bad = geom;
  bad.angle_deg = 360.0;
  EXPECT_THROW(render_drr(v, bad), ValidationError);
  bad = fit_detector(g, 0.0, Beam::Cone, 1.0);
  bad.sdd_mm = bad.sad_mm;
  EXPECT_THROW(render_drr(v, bad), ValidationError);
  EXPECT_THROW(render_drr(v, geom, 0.9), ValidationError);
}

TEST(NormalizeUnit, AffineFixedPointAndConstant) {
  Projection p;
  p.geometry.nu = 3;
  p.geometry.nv = 1;
  p.pixels = {2.0f, 4.0f, 6.0f};
  EXPECT_EQ(normalize_unit(p).pixels, (std::vector<float>{0.0f, 0.5f, 1.0f}));
  p.pixels = {0.0f, 0.25f, 1.0f};
  EXPECT_EQ(normalize_unit(p).pixels, p.pixels);
  p.pixels = {3.0f, 3.0f, 3.0f};
  EXPECT_EQ(normalize_unit(p).pixels, (std::vector<float>{0.0f, 0.0f, 0.0f}));
}

TEST(GaussianNoise, IdentityStatisticsAndRange) {
  Projection p;
  p.geometry.nu = p.geometry.nv = 256;
  p.pixels.assign(256 * 256, 0.5f);
  EXPECT_EQ(add_gaussian_noise(p, 0.0, 1), p);
  const auto n = add_gaussian_noise(p, 0.05, 7);
  double m = 0.0, s = 0.0;
  for (float x : n.pixels) m += x;
  m /= double(n.pixels.size());
  for (float x : n.pixels) s += (x - m) * (x - m);
  const double sd = std::sqrt(s / double(n.pixels.size() - 1));
  EXPECT_GE(sd, 0.0475);
  EXPECT_LE(sd, 0.0525);
  EXPECT_EQ(add_gaussian_noise(p, 0.05, 7), n);

  const auto big = add_gaussian_noise(p, 0.8, 3);
  for (float x : big.pixels) {
    ASSERT_GE(x, 0.0f);
    ASSERT_LE(x, 1.0f);
  }
}

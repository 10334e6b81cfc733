#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rtsrts/error.hpp"
#include "rtsrts/motion.hpp"
#include "rtsrts/phantom.hpp"

using namespace rtsrts;

namespace {

Grid3 small_grid() {
  Grid3 g;
  g.dims = {3, 3, 2};
  g.spacing = {2.0, 2.0, 3.0};
  return g;
}

DisplacementField random_field(const Grid3& g, std::uint64_t seed) {
  DisplacementField f = DisplacementField::zeros(g);
  const auto v = oracle::random_values(f.vectors.size(), seed, -3.0, 3.0);
  for (std::size_t i = 0; i < v.size(); ++i) f.vectors[i] = static_cast<float>(v[i]);
  return f;
}

std::vector<double> as_double(const DisplacementField& f) { return {f.vectors.begin(), f.vectors.end()}; }

double sq_dist(const DisplacementField& a, const DisplacementField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.vectors.size(); ++i) s += std::pow(double(a.vectors[i]) - double(b.vectors[i]), 2);
  return s;
}

std::vector<DisplacementField> nine_fields() {
  std::vector<DisplacementField> fields;
  for (int i = 0; i < 9; ++i) fields.push_back(random_field(small_grid(), 100 + i));
  return fields;
}

Volume random_volume(const Grid3& g, std::uint64_t seed) {
  Volume v = Volume::filled(g, 0.0f);
  const auto r = oracle::random_values(v.voxels.size(), seed, 0.0, 1.0);
  for (std::size_t i = 0; i < r.size(); ++i) v.voxels[i] = static_cast<float>(r[i]);
  return v;
}

}  // namespace

TEST(FitPca, TwoFieldsRankOneIsExact) {
  std::vector<DisplacementField> f{random_field(small_grid(), 1), random_field(small_grid(), 2)};
  const auto m = motion::fit_pca(f, 1);
  for (const auto& x : f) {
    const auto c = motion::project(m, x);
    EXPECT_LT(sq_dist(motion::synthesize_dvf(m, c), x), 1e-8);
  }
}

TEST(FitPca, ZeroCoefficientsGiveMeanExactly) {
  const auto fields = nine_fields();
  const auto m = motion::fit_pca(fields, 3);
  const std::vector<double> zero(3, 0.0);
  EXPECT_EQ(motion::synthesize_dvf(m, zero), m.mean);
}

TEST(FitPca, ResidualMatchesEigendecompositionOracle) {
  const auto fields = nine_fields();
  const auto m = motion::fit_pca(fields, 3);
  std::vector<std::vector<double>> rows;
  for (const auto& f : fields) rows.push_back(as_double(f));
  const auto eig = oracle::scatter_eigen(rows);
  double tail = 0.0;
  for (std::size_t i = 3; i < eig.values.size(); ++i) tail += std::max(0.0, eig.values[i]);
  double residual = 0.0;
  for (const auto& f : fields) residual += sq_dist(motion::synthesize_dvf(m, motion::project(m, f)), f);
  EXPECT_LT(oracle::rel_err(residual, tail), 1e-4);
  for (int i = 0; i < 3; ++i) EXPECT_LT(oracle::rel_err(m.eigenvalues[i], eig.values[i]), 1e-4);
}

TEST(FitPca, ProjectionReproducesOracleRankThreeApproximation) {
  const auto fields = nine_fields();
  const auto m = motion::fit_pca(fields, 3);
  std::vector<std::vector<double>> rows;
  for (const auto& f : fields) rows.push_back(as_double(f));
  std::vector<double> mean;
  const auto eig = oracle::scatter_eigen(rows, &mean);
  for (const auto& row : rows) {
    std::vector<double> approx = mean;
    for (int c = 0; c < 3; ++c) {
      double coeff = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) coeff += (row[j] - mean[j]) * eig.vectors[c][j];
      for (std::size_t j = 0; j < row.size(); ++j) approx[j] += coeff * eig.vectors[c][j];
    }
    DisplacementField f{small_grid(), std::vector<float>(row.begin(), row.end())};
    const auto got = as_double(motion::synthesize_dvf(m, motion::project(m, f)));
    EXPECT_LT(oracle::vec_rel_err(got, approx), 1e-4);
  }
}

TEST(FitPca, ComponentsOrthonormalAndSpectrumSorted) {
  const auto m = motion::fit_pca(nine_fields(), 3);
  ASSERT_EQ(m.rank(), 3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < m.components[a].vectors.size(); ++i)
        dot += double(m.components[a].vectors[i]) * m.components[b].vectors[i];
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-5);
    }
  EXPECT_GE(m.eigenvalues[0], m.eigenvalues[1]);
  EXPECT_GE(m.eigenvalues[1], m.eigenvalues[2]);
  EXPECT_GE(m.eigenvalues[2], 0.0);
}

TEST(FitPca, BoundsCoverTrainingProjections) {
  const auto fields = nine_fields();
  const auto m = motion::fit_pca(fields, 3);
  for (const auto& f : fields) {
    const auto c = motion::project(m, f);
    for (int i = 0; i < 3; ++i) {
      EXPECT_GE(c[i], m.coeff_bounds[i][0] - 1e-9);
      EXPECT_LE(c[i], m.coeff_bounds[i][1] + 1e-9);
    }
  }
}

TEST(FitPca, RejectsRankAboveData) {
  // Five fields in a two-dimensional affine family.
  const auto a = random_field(small_grid(), 7), b = random_field(small_grid(), 8);
  std::vector<DisplacementField> f;
  for (int i = 0; i < 5; ++i) {
    DisplacementField x = a;
    for (std::size_t j = 0; j < x.vectors.size(); ++j) x.vectors[j] = float(i) * a.vectors[j] + float(i * i) * b.vectors[j];
    f.push_back(x);
  }
  EXPECT_NO_THROW(motion::fit_pca(f, 2));
  EXPECT_THROW(motion::fit_pca(f, 3), ValidationError);
  EXPECT_THROW(motion::fit_pca(std::span(f).first(3), 3), ValidationError);
}

TEST(SampleCoeffs, InsideWidenedBoundsAndDeterministic) {
  const auto m = motion::fit_pca(nine_fields(), 3);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto c = motion::sample_coeffs(m, s);
    ASSERT_EQ(c.size(), 3u);
    for (int i = 0; i < 3; ++i) {
      const double mid = 0.5 * (m.coeff_bounds[i][0] + m.coeff_bounds[i][1]);
      const double half = 0.6 * (m.coeff_bounds[i][1] - m.coeff_bounds[i][0]);
      EXPECT_GE(c[i], mid - half);
      EXPECT_LE(c[i], mid + half);
    }
  }
  EXPECT_EQ(motion::sample_coeffs(m, 42), motion::sample_coeffs(m, 42));
}

TEST(SampleCoeffs, UniformMeanWithinThreeStandardErrors) {
  const auto m = motion::fit_pca(nine_fields(), 3);
  const int n = 10000;
  std::array<double, 3> sum{};
  for (int s = 0; s < n; ++s) {
    const auto c = motion::sample_coeffs(m, std::uint64_t(s));
    for (int i = 0; i < 3; ++i) sum[i] += c[i];
  }
  for (int i = 0; i < 3; ++i) {
    const double mid = 0.5 * (m.coeff_bounds[i][0] + m.coeff_bounds[i][1]);
    const double width = 1.2 * (m.coeff_bounds[i][1] - m.coeff_bounds[i][0]);
    const double se = width / std::sqrt(12.0 * n);
    EXPECT_LT(std::abs(sum[i] / n - mid), 3.0 * se);
  }
}

TEST(SynthesizeDvf, AffineInCoefficients) {
  const auto m = motion::fit_pca(nine_fields(), 3);
  const std::vector<double> a{0.3, -1.2, 2.0}, b{-0.7, 0.4, 0.1}, ab{-0.4, -0.8, 2.1};
  const auto fa = motion::synthesize_dvf(m, a), fb = motion::synthesize_dvf(m, b), fab = motion::synthesize_dvf(m, ab);
  for (std::size_t i = 0; i < fa.vectors.size(); ++i)
    EXPECT_NEAR(double(fa.vectors[i]) + fb.vectors[i] - m.mean.vectors[i], fab.vectors[i], 1e-5);
}

TEST(WarpVolume, ZeroFieldIsBitExactIdentity) {
  Grid3 g;
  g.dims = {7, 6, 5};
  g.spacing = {1.5, 2.0, 2.5};
  const auto v = random_volume(g, 3);
  EXPECT_EQ(motion::warp_volume(v, DisplacementField::zeros(g)), v);
  Mask mk = Mask::filled(g, 0);
  for (std::size_t i = 0; i < mk.voxels.size(); i += 3) mk.voxels[i] = 1;
  EXPECT_EQ(motion::warp_mask(mk, DisplacementField::zeros(g)), mk);
}

TEST(WarpVolume, IntegerShiftOfRamp) {
  Grid3 g;
  g.dims = {10, 4, 4};
  g.spacing = {2.0, 1.0, 1.0};
  Volume ramp = Volume::filled(g, 0.0f);
  for (std::int64_t k = 0; k < 4; ++k)
    for (std::int64_t j = 0; j < 4; ++j)
      for (std::int64_t i = 0; i < 10; ++i) ramp.voxels[g.index(i, j, k)] = float(i) + 10.0f * float(j);
  DisplacementField d = DisplacementField::zeros(g);
  for (std::size_t v = 0; v < d.vectors.size(); v += 3) d.vectors[v] = 4.0f;  // two voxels along x
  const auto out = motion::warp_volume(ramp, d);
  for (std::int64_t k = 0; k < 4; ++k)
    for (std::int64_t j = 0; j < 4; ++j)
      for (std::int64_t i = 0; i + 2 < 10; ++i) EXPECT_EQ(out.at(i, j, k), ramp.at(i + 2, j, k));

  Mask mk = Mask::filled(g, 0);
  mk.voxels[g.index(5, 1, 1)] = 1;
  const auto shifted = motion::warp_mask(mk, d);
  EXPECT_EQ(shifted.count(), 1);
  EXPECT_EQ(shifted.voxels[g.index(3, 1, 1)], 1);
}

TEST(WarpVolume, MatchesTrilinearOracle) {
  Grid3 g;
  g.dims = {9, 8, 7};
  g.spacing = {1.0, 1.5, 2.0};
  const auto v = random_volume(g, 4);
  DisplacementField d = DisplacementField::zeros(g);
  for (std::int64_t k = 0; k < 7; ++k)
    for (std::int64_t j = 0; j < 8; ++j)
      for (std::int64_t i = 0; i < 9; ++i) {
        float* u = &d.vectors[3 * g.index(i, j, k)];
        u[0] = float(2.3 * std::sin(0.4 * j + 0.2 * k));
        u[1] = float(-1.7 * std::cos(0.3 * i));
        u[2] = float(3.1 * std::sin(0.5 * i + 0.1 * j));
      }
  const auto out = motion::warp_volume(v, d);
  double worst = 0.0;
  for (std::int64_t k = 0; k < 7; ++k)
    for (std::int64_t j = 0; j < 8; ++j)
      for (std::int64_t i = 0; i < 9; ++i) {
        const float* u = &d.vectors[3 * g.index(i, j, k)];
        const double ref = oracle::trilinear(v, i + u[0] / 1.0, j + u[1] / 1.5, k + u[2] / 2.0);
        worst = std::max(worst, std::abs(ref - out.at(i, j, k)));
      }
  EXPECT_LT(worst, 1e-5);
}

TEST(WarpVolume, RejectsGeometryMismatch) {
  Grid3 a, b;
  a.dims = {4, 4, 4};
  b.dims = {4, 4, 5};
  EXPECT_THROW(motion::warp_volume(Volume::filled(a, 0.0f), DisplacementField::zeros(b)), ValidationError);
  EXPECT_THROW(motion::warp_mask(Mask::filled(a, 0), DisplacementField::zeros(b)), ValidationError);
}

TEST(WarpMask, PhantomFieldsPreserveVolumeAndBinarity) {
  const auto spec = phantom::PhantomSpec::desk();
  const auto lungs = phantom::lung_mask(spec);
  for (int i = 0; i < 10; ++i) {
    const auto w = motion::warp_mask(lungs, phantom::phase_dvf(spec, i));
    for (auto v : w.voxels) ASSERT_LE(v, 1);
    EXPECT_LT(std::abs(double(w.count()) - double(lungs.count())) / double(lungs.count()), 0.10);
  }
}

TEST(FitPca, PhantomPhasesGiveRankThreeModel) {
  const auto spec = phantom::PhantomSpec::desk();
  std::vector<DisplacementField> f;
  for (int i = 0; i < 10; ++i) f.push_back(phantom::phase_dvf(spec, i));
  const auto m = motion::fit_pca(f, 3);
  EXPECT_EQ(m.rank(), 3);
  EXPECT_GT(m.eigenvalues[2], 0.0);
}

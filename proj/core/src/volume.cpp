#include "rtsrts/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rtsrts/error.hpp"

namespace rtsrts {

std::string describe(const Grid3& g) {
  std::ostringstream os;
  os << "dims=(" << g.dims[0] << ',' << g.dims[1] << ',' << g.dims[2] << ") spacing=("
     << g.spacing[0] << ',' << g.spacing[1] << ',' << g.spacing[2] << ')';
  return os.str();
}

void validate(const Grid3& g) {
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] <= 0) throw ValidationError("grid dims must be positive: " + describe(g));
    if (!(g.spacing[a] > 0.0) || !std::isfinite(g.spacing[a])) {
      throw ValidationError("grid spacing must be positive: " + describe(g));
    }
  }
}

void require_same_grid(const Grid3& a, const Grid3& b, const char* what) {
  if (a.dims != b.dims || a.spacing != b.spacing) {
    throw ValidationError(std::string(what) + ": geometry mismatch " + describe(a) + " vs " +
                          describe(b));
  }
}

Volume Volume::filled(const Grid3& grid, float value) {
  validate(grid);
  return Volume{grid, std::vector<float>(static_cast<std::size_t>(grid.count()), value)};
}

Mask Mask::filled(const Grid3& grid, std::uint8_t value) {
  validate(grid);
  return Mask{grid, std::vector<std::uint8_t>(static_cast<std::size_t>(grid.count()), value)};
}

std::int64_t Mask::count() const {
  return std::count_if(voxels.begin(), voxels.end(), [](std::uint8_t v) { return v != 0; });
}

DisplacementField DisplacementField::zeros(const Grid3& grid) {
  validate(grid);
  return DisplacementField{grid, std::vector<float>(static_cast<std::size_t>(3 * grid.count()), 0.0f)};
}

float DisplacementField::max_magnitude() const {
  double best = 0.0;
  for (std::size_t i = 0; i + 2 < vectors.size(); i += 3) {
    const double m = std::sqrt(double(vectors[i]) * vectors[i] + double(vectors[i + 1]) * vectors[i + 1] +
                               double(vectors[i + 2]) * vectors[i + 2]);
    best = std::max(best, m);
  }
  return static_cast<float>(best);
}

void validate(const Volume& v) {
  validate(v.grid);
  if (static_cast<std::int64_t>(v.voxels.size()) != v.grid.count()) {
    throw ValidationError("volume voxel count does not match " + describe(v.grid));
  }
  for (float x : v.voxels) {
    if (!std::isfinite(x)) throw ValidationError("volume contains a non-finite voxel");
  }
}

void validate(const Mask& m) {
  validate(m.grid);
  if (static_cast<std::int64_t>(m.voxels.size()) != m.grid.count()) {
    throw ValidationError("mask voxel count does not match " + describe(m.grid));
  }
  for (auto x : m.voxels) {
    if (x > 1) throw ValidationError("mask voxel value " + std::to_string(int(x)) + " is not in {0,1}");
  }
}

void validate(const DisplacementField& f) {
  validate(f.grid);
  if (static_cast<std::int64_t>(f.vectors.size()) != 3 * f.grid.count()) {
    throw ValidationError("displacement field size does not match " + describe(f.grid));
  }
  for (float x : f.vectors) {
    if (!std::isfinite(x)) throw ValidationError("displacement field contains a non-finite vector");
  }
}

void normalize_unit_inplace(std::vector<float>& values) {
  if (values.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    std::fill(values.begin(), values.end(), 0.0f);
    return;
  }
  const double inv = 1.0 / (hi - lo);
  for (auto& v : values) v = static_cast<float>(std::clamp((v - lo) * inv, 0.0, 1.0));
}

Volume normalize_unit(const Volume& v) {
  Volume out = v;
  normalize_unit_inplace(out.voxels);
  return out;
}

double sample_trilinear(const Volume& v, double x, double y, double z) {
  const auto& d = v.grid.dims;
  auto split = [](double c, std::int64_t n, std::int64_t& i0, std::int64_t& i1, double& f) {
    c = std::clamp(c, 0.0, double(n - 1));
    i0 = static_cast<std::int64_t>(std::floor(c));
    if (i0 >= n - 1) {
      i0 = n - 1;
      i1 = n - 1;
      f = 0.0;
    } else {
      i1 = i0 + 1;
      f = c - double(i0);
    }
  };
  std::int64_t x0, x1, y0, y1, z0, z1;
  double fx, fy, fz;
  split(x, d[0], x0, x1, fx);
  split(y, d[1], y0, y1, fy);
  split(z, d[2], z0, z1, fz);
  auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> double { return v.at(i, j, k); };
  const double c00 = at(x0, y0, z0) + (at(x1, y0, z0) - at(x0, y0, z0)) * fx;
  const double c10 = at(x0, y1, z0) + (at(x1, y1, z0) - at(x0, y1, z0)) * fx;
  const double c01 = at(x0, y0, z1) + (at(x1, y0, z1) - at(x0, y0, z1)) * fx;
  const double c11 = at(x0, y1, z1) + (at(x1, y1, z1) - at(x0, y1, z1)) * fx;
  const double c0 = c00 + (c10 - c00) * fy;
  const double c1 = c01 + (c11 - c01) * fy;
  return c0 + (c1 - c0) * fz;
}

}  // namespace rtsrts

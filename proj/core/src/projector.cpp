#include "rtsrts/projector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rtsrts/error.hpp"

namespace rtsrts {

std::string to_string(Beam b) { return b == Beam::Parallel ? "parallel" : "cone"; }

Beam beam_from_string(const std::string& s) {
  if (s == "parallel") return Beam::Parallel;
  if (s == "cone") return Beam::Cone;
  throw ValidationError("unknown beam model '" + s + "' (expected parallel|cone)");
}

namespace {

struct Vec3 {
  double x, y, z;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }

double footprint_diag(const Grid3& g) {
  const auto e = g.extent_mm();
  return std::hypot(e[0], e[1]);
}

double magnification(const Geometry& geom, const Grid3& grid) {
  if (geom.beam == Beam::Parallel) return 1.0;
  const double radius = 0.5 * footprint_diag(grid);
  return geom.sdd_mm / (geom.sad_mm - radius);
}

// Ray/box intersection (slab method). Returns false when the ray misses.
bool clip_to_box(Vec3 p, Vec3 d, const double lo[3], const double hi[3], double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  const double pv[3] = {p.x, p.y, p.z};
  const double dv[3] = {d.x, d.y, d.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dv[a]) < 1e-12) {
      if (pv[a] < lo[a] || pv[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - pv[a]) / dv[a];
    double tb = (hi[a] - pv[a]) / dv[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

}  // namespace

Geometry fit_detector(const Grid3& grid, double angle_deg, Beam beam, double pixel_mm,
                      double sad_mm, double sdd_mm) {
  validate(grid);
  if (!(pixel_mm > 0.0)) throw ValidationError("detector pixel pitch must be positive");
  Geometry g;
  g.angle_deg = angle_deg;
  g.beam = beam;
  g.sad_mm = sad_mm;
  g.sdd_mm = sdd_mm;
  g.du = g.dv = pixel_mm;
  const double mag = magnification(g, grid);
  const double width = footprint_diag(grid) * mag;
  const double height = grid.extent_mm()[2] * mag;
  const auto n = static_cast<std::int64_t>(std::ceil(std::max(width, height) / pixel_mm - 1e-9));
  g.nu = g.nv = std::max<std::int64_t>(n, 1);
  return g;
}

void validate(const Geometry& geom, const Grid3& grid) {
  if (!std::isfinite(geom.angle_deg) || geom.angle_deg < 0.0 || geom.angle_deg >= 360.0) {
    throw ValidationError("gantry angle must lie in [0,360), got " + std::to_string(geom.angle_deg));
  }
  if (geom.nu <= 0 || geom.nv <= 0 || !(geom.du > 0.0) || !(geom.dv > 0.0)) {
    throw ValidationError("detector must have positive pixel counts and spacing");
  }
  if (geom.beam == Beam::Cone) {
    const double radius = 0.5 * footprint_diag(grid);
    if (!(geom.sad_mm > radius) || !(geom.sdd_mm > geom.sad_mm)) {
      throw ValidationError("cone geometry requires SDD > SAD > volume radius");
    }
  }
  const double mag = magnification(geom, grid);
  const double tol = 1e-6;
  if (geom.nu * geom.du + tol < footprint_diag(grid) * mag ||
      geom.nv * geom.dv + tol < grid.extent_mm()[2] * mag) {
    throw ValidationError("detector does not cover the volume footprint");
  }
}

Projection render_drr(const Volume& vol, const Geometry& geom, double step_mm) {
  validate(vol.grid);
  validate(geom, vol.grid);
  const Grid3& grid = vol.grid;
  double min_spacing = std::min({grid.spacing[0], grid.spacing[1], grid.spacing[2]});
  const double h_max = 0.5 * min_spacing;
  if (step_mm <= 0.0) step_mm = h_max;
  if (step_mm > h_max + 1e-12) {
    throw ValidationError("ray step must not exceed half the smallest voxel spacing");
  }

  double lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = grid.origin[a] - 0.5 * grid.spacing[a];
    hi[a] = grid.origin[a] + (grid.dims[a] - 0.5) * grid.spacing[a];
  }
  const auto c3 = grid.center_mm();
  const Vec3 center{c3[0], c3[1], c3[2]};
  const double a = geom.angle_deg * std::numbers::pi / 180.0;
  const Vec3 dir{std::cos(a), std::sin(a), 0.0};
  const Vec3 eu{-std::sin(a), std::cos(a), 0.0};
  const Vec3 ev{0.0, 0.0, 1.0};
  const Vec3 source = center - geom.sad_mm * dir;
  const Vec3 det_center = center + (geom.sdd_mm - geom.sad_mm) * dir;

  Projection out;
  out.geometry = geom;
  out.pixels.assign(static_cast<std::size_t>(geom.nu * geom.nv), 0.0f);
  const double inv_sp[3] = {1.0 / grid.spacing[0], 1.0 / grid.spacing[1], 1.0 / grid.spacing[2]};

#pragma omp parallel for schedule(static)
  for (std::int64_t iv = 0; iv < geom.nv; ++iv) {
    const double v = (double(iv) - 0.5 * double(geom.nv - 1)) * geom.dv;
    for (std::int64_t iu = 0; iu < geom.nu; ++iu) {
      const double u = (double(iu) - 0.5 * double(geom.nu - 1)) * geom.du;
      Vec3 p, d;
      if (geom.beam == Beam::Parallel) {
        p = center + u * eu + v * ev;
        d = dir;
      } else {
        const Vec3 pix = det_center + u * eu + v * ev;
        const Vec3 r = pix - source;
        const double len = std::sqrt(r.x * r.x + r.y * r.y + r.z * r.z);
        p = source;
        d = (1.0 / len) * r;
      }
      double t0, t1;
      if (!clip_to_box(p, d, lo, hi, t0, t1)) continue;
      const auto n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil((t1 - t0) / step_mm - 1e-9)));
      const double h = (t1 - t0) / double(n);
      double acc = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        const double t = t0 + (double(k) + 0.5) * h;
        const double x = (p.x + t * d.x - grid.origin[0]) * inv_sp[0];
        const double y = (p.y + t * d.y - grid.origin[1]) * inv_sp[1];
        const double z = (p.z + t * d.z - grid.origin[2]) * inv_sp[2];
        acc += sample_trilinear(vol, x, y, z);
      }
      out.pixels[static_cast<std::size_t>(iv * geom.nu + iu)] = static_cast<float>(acc * h);
    }
  }
  return out;
}

Projection normalize_unit(const Projection& p) {
  Projection out = p;
  normalize_unit_inplace(out.pixels);
  return out;
}

Projection add_gaussian_noise(const Projection& p, double sigma_ratio, std::uint64_t seed) {
  if (!(sigma_ratio >= 0.0)) throw ValidationError("sigma ratio must be non-negative");
  if (sigma_ratio == 0.0) return p;
  Projection out = p;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma_ratio);
  for (auto& v : out.pixels) v = static_cast<float>(std::clamp(double(v) + noise(rng), 0.0, 1.0));
  return out;
}

}  // namespace rtsrts

#include "rtsrts/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "rtsrts/error.hpp"
#include "rtsrts/motion.hpp"
#include "rtsrts/rtsv_io.hpp"

namespace rtsrts::phantom {

namespace fs = std::filesystem;

namespace {

double sq(double v) { return v * v; }

bool inside(const Ellipsoid& e, double x, double y, double z) {
  return sq((x - e.center_mm[0]) / e.semi_axes_mm[0]) + sq((y - e.center_mm[1]) / e.semi_axes_mm[1]) +
             sq((z - e.center_mm[2]) / e.semi_axes_mm[2]) <=
         1.0;
}

// Cosine step: 1 below a, 0 above b.
double taper(double v, double a, double b) {
  if (v <= a) return 1.0;
  if (v >= b) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (v - a) / (b - a)));
}

struct Anatomy {
  const PhantomSpec& spec;
  std::vector<std::array<double, 3>> vessels;

  bool in_body(double x, double y) const {
    return sq(x / spec.body_semi_axes_mm[0]) + sq(y / spec.body_semi_axes_mm[1]) <= 1.0;
  }
  bool in_lung(double x, double y, double z) const {
    return inside(spec.lungs[0], x, y, z) || inside(spec.lungs[1], x, y, z);
  }
  bool in_tumor(double x, double y, double z) const {
    const auto& c = spec.tumor_center_mm;
    return sq(x - c[0]) + sq(y - c[1]) + sq(z - c[2]) <= sq(spec.tumor_radius_mm);
  }
  bool in_bone(double x, double y, double z) const {
    if (sq(x - spec.spine_center_mm[0]) + sq(y - spec.spine_center_mm[1]) <= sq(spec.spine_radius_mm)) {
      return true;
    }
    const double r = std::sqrt(sq(x / spec.body_semi_axes_mm[0]) + sq(y / spec.body_semi_axes_mm[1]));
    if (r < spec.rib_inner_scale || r > spec.rib_outer_scale) return false;
    for (int k = 0; k < spec.rib_count; ++k) {
      const double zc = (k - 0.5 * (spec.rib_count - 1)) * spec.rib_pitch_mm;
      if (std::abs(z - zc) <= 0.5 * spec.rib_thickness_mm) return true;
    }
    return false;
  }
  float intensity(double x, double y, double z) const {
    if (!in_body(x, y)) return 0.0f;
    if (in_bone(x, y, z)) return spec.bone_intensity;
    if (in_tumor(x, y, z)) return spec.tumor_intensity;
    if (in_lung(x, y, z)) {
      for (const auto& v : vessels) {
        if (sq(x - v[0]) + sq(y - v[1]) + sq(z - v[2]) <= sq(spec.vessel_radius_mm)) {
          return spec.vessel_intensity;
        }
      }
      return spec.lung_intensity;
    }
    return spec.body_intensity;
  }
};

std::vector<std::array<double, 3>> place_vessels(const PhantomSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<std::array<double, 3>> out;
  const double keep_out = spec.tumor_radius_mm + spec.vessel_radius_mm + 2.0;
  for (const auto& lung : spec.lungs) {
    int placed = 0;
    for (int attempt = 0; placed < spec.vessels_per_lung && attempt < 10000; ++attempt) {
      std::array<double, 3> d{unit(rng), unit(rng), unit(rng)};
      if (sq(d[0]) + sq(d[1]) + sq(d[2]) > sq(0.75)) continue;
      std::array<double, 3> p{};
      for (int a = 0; a < 3; ++a) p[a] = lung.center_mm[a] + d[a] * lung.semi_axes_mm[a];
      const auto& t = spec.tumor_center_mm;
      if (sq(p[0] - t[0]) + sq(p[1] - t[1]) + sq(p[2] - t[2]) < sq(keep_out)) continue;
      out.push_back(p);
      ++placed;
    }
  }
  return out;
}

template <typename F>
void for_each_voxel(const Grid3& g, F&& f) {
  const auto c = g.center_mm();
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < g.nz(); ++k) {
    for (std::int64_t j = 0; j < g.ny(); ++j) {
      for (std::int64_t i = 0; i < g.nx(); ++i) {
        const double x = g.origin[0] + i * g.spacing[0] - c[0];
        const double y = g.origin[1] + j * g.spacing[1] - c[1];
        const double z = g.origin[2] + k * g.spacing[2] - c[2];
        f(static_cast<std::size_t>(g.index(i, j, k)), x, y, z);
      }
    }
  }
}

}  // namespace

PhantomSpec PhantomSpec::for_grid(const Grid3& grid, std::uint64_t seed) {
  const auto ext = grid.extent_mm();
  const double e = std::min({ext[0], ext[1], ext[2]});
  PhantomSpec s;
  s.grid = grid;
  s.seed = seed;
  s.body_semi_axes_mm = {0.45 * e, 0.36 * e};
  s.lungs[0] = {{-0.2 * e, -0.03 * e, 0.02 * e}, {0.16 * e, 0.22 * e, 0.36 * e}};
  s.lungs[1] = {{0.2 * e, -0.03 * e, 0.02 * e}, {0.16 * e, 0.22 * e, 0.36 * e}};
  s.spine_center_mm = {0.0, 0.26 * e};
  s.spine_radius_mm = 0.06 * e;
  s.rib_count = 6;
  s.rib_inner_scale = 0.86;
  s.rib_outer_scale = 0.95;
  s.rib_pitch_mm = 0.12 * e;
  s.rib_thickness_mm = 0.045 * e;
  s.vessels_per_lung = 5;
  s.vessel_radius_mm = 0.025 * e;
  s.tumor_center_mm = {-0.2 * e, -0.03 * e, 0.0};
  s.tumor_radius_mm = 0.11 * e;
  s.breathing_amplitude_mm = 0.1 * e;
  s.compression_factor = 0.005;
  s.motion_inner_radius_mm = 0.34 * e;
  s.motion_outer_radius_mm = 0.52 * e;
  s.apex_start_mm = s.tumor_center_mm[2] + s.tumor_radius_mm + s.breathing_amplitude_mm + 0.02 * e;
  s.apex_end_mm = 0.45 * e;
  s.apex_weight = 0.3;
  return s;
}

PhantomSpec PhantomSpec::desk() {
  Grid3 g;
  g.dims = {32, 32, 24};
  g.spacing = {3.0, 3.0, 4.0};
  return for_grid(g);
}

PhantomSpec PhantomSpec::paper() {
  Grid3 g;
  g.dims = {128, 128, 128};
  g.spacing = {1.0, 1.0, 1.0};
  return for_grid(g);
}

void validate(const PhantomSpec& s) {
  validate(s.grid);
  if (s.phase_count != 10) {
    throw ValidationError("phantom phase_count must be 10, got " + std::to_string(s.phase_count));
  }
  if (s.tumor_radius_mm <= 0.0) throw ValidationError("tumor radius must be positive");
  if (s.body_semi_axes_mm[0] <= 0.0 || s.body_semi_axes_mm[1] <= 0.0) {
    throw ValidationError("body semi-axes must be positive");
  }
  for (const auto& l : s.lungs) {
    for (double a : l.semi_axes_mm) {
      if (a <= 0.0) throw ValidationError("lung semi-axes must be positive");
    }
  }
  if (s.breathing_amplitude_mm < 0.0 || s.compression_factor < 0.0 || s.compression_factor >= 0.5) {
    throw ValidationError("breathing amplitude must be >= 0 and compression factor in [0, 0.5)");
  }
  if (!(s.motion_outer_radius_mm > s.motion_inner_radius_mm) || !(s.apex_end_mm > s.apex_start_mm)) {
    throw ValidationError("motion taper bounds must be increasing");
  }
  if (s.supersampling < 1) throw ValidationError("supersampling must be >= 1");
  // Tumor sphere strictly inside one lung at the reference: test the six
  // axis extremes and the eight diagonal points of the sphere.
  const auto& c = s.tumor_center_mm;
  const double r = s.tumor_radius_mm;
  bool contained = false;
  for (const auto& l : s.lungs) {
    bool all = true;
    for (int dx = -1; dx <= 1 && all; ++dx)
      for (int dy = -1; dy <= 1 && all; ++dy)
        for (int dz = -1; dz <= 1 && all; ++dz) {
          const double n = std::sqrt(double(dx * dx + dy * dy + dz * dz));
          if (n == 0.0) continue;
          all = inside(l, c[0] + r * dx / n, c[1] + r * dy / n, c[2] + r * dz / n);
        }
    contained = contained || all;
  }
  if (!contained) throw ValidationError("tumor does not lie inside a lung in the reference");
}

DisplacementField phase_dvf(const PhantomSpec& spec, int phase) {
  if (phase < 0 || phase >= spec.phase_count) {
    throw ValidationError("phase " + std::to_string(phase) + " outside [0, " +
                          std::to_string(spec.phase_count) + ")");
  }
  auto field = DisplacementField::zeros(spec.grid);
  if (phase == 0) return field;
  const double s = std::sin(std::numbers::pi * phase / (spec.phase_count - 1));
  const double shift = s * spec.breathing_amplitude_mm;
  for_each_voxel(spec.grid, [&](std::size_t idx, double x, double y, double z) {
    const double r = std::hypot(x, y);
    const double gr = taper(r, spec.motion_inner_radius_mm, spec.motion_outer_radius_mm);
    const double gz = spec.apex_weight + (1.0 - spec.apex_weight) *
                                             taper(z + shift, spec.apex_start_mm, spec.apex_end_mm);
    float* u = &field.vectors[3 * idx];
    u[0] = static_cast<float>(-s * spec.compression_factor * x);
    u[1] = static_cast<float>(-s * spec.compression_factor * y);
    u[2] = static_cast<float>(shift * gr * gz);
  });
  return field;
}

Mask lung_mask(const PhantomSpec& spec) {
  Mask m = Mask::filled(spec.grid, 0);
  for_each_voxel(spec.grid, [&](std::size_t idx, double x, double y, double z) {
    m.voxels[idx] = (inside(spec.lungs[0], x, y, z) || inside(spec.lungs[1], x, y, z)) ? 1 : 0;
  });
  return m;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  Anatomy anatomy{spec, place_vessels(spec)};
  const Grid3& g = spec.grid;
  const int ss = spec.supersampling;

  Phantom out;
  out.reference = Volume::filled(g, 0.0f);
  out.reference_mask = Mask::filled(g, 0);
  for_each_voxel(g, [&](std::size_t idx, double x, double y, double z) {
    double acc = 0.0;
    for (int a = 0; a < ss; ++a)
      for (int b = 0; b < ss; ++b)
        for (int c = 0; c < ss; ++c) {
          acc += anatomy.intensity(x + ((a + 0.5) / ss - 0.5) * g.spacing[0],
                                   y + ((b + 0.5) / ss - 0.5) * g.spacing[1],
                                   z + ((c + 0.5) / ss - 0.5) * g.spacing[2]);
        }
    out.reference.voxels[idx] = static_cast<float>(acc / (ss * ss * ss));
    out.reference_mask.voxels[idx] = anatomy.in_tumor(x, y, z) ? 1 : 0;
  });
  if (out.reference_mask.count() == 0) {
    throw ValidationError("tumor covers no voxel center at this resolution");
  }

  const Mask lungs = lung_mask(spec);
  for (int p = 0; p < spec.phase_count; ++p) {
    auto dvf = phase_dvf(spec, p);
    Phase phase{motion::warp_volume(out.reference, dvf), motion::warp_mask(out.reference_mask, dvf)};
    const Mask phase_lungs = motion::warp_mask(lungs, dvf);
    if (phase.mask.count() == 0) {
      throw ValidationError("tumor mask is empty at phase " + std::to_string(p));
    }
    for (std::size_t i = 0; i < phase.mask.voxels.size(); ++i) {
      if (phase.mask.voxels[i] && !phase_lungs.voxels[i]) {
        throw ValidationError("tumor leaves the lung at phase " + std::to_string(p));
      }
    }
    out.phases.push_back(std::move(phase));
    out.dvfs.push_back(std::move(dvf));
  }
  return out;
}

void save_phantom(const Phantom& p, const fs::path& dir) {
  io::write_volume(dir / "reference.rtsv", p.reference);
  io::write_mask(dir / "reference_mask.rtsv", p.reference_mask);
  for (std::size_t i = 0; i < p.phases.size(); ++i) {
    const auto n = std::to_string(i);
    io::write_volume(dir / ("phase_" + n + ".rtsv"), p.phases[i].volume);
    io::write_mask(dir / ("phase_" + n + "_mask.rtsv"), p.phases[i].mask);
    io::write_dvf(dir / ("dvf_" + n + ".rtsv"), p.dvfs[i]);
  }
}

Phantom load_external_4dct(const fs::path& dir, int phase_count) {
  auto require = [&](const fs::path& f) {
    if (!fs::exists(f)) {
      throw IoError("expected " + std::to_string(phase_count) + " phases in " + dir.string() +
                    "; missing " + f.filename().string());
    }
    return f;
  };
  Phantom out;
  out.reference = io::read_volume(require(dir / "reference.rtsv"));
  out.reference_mask = io::read_mask(require(dir / "reference_mask.rtsv"));
  require_same_grid(out.reference.grid, out.reference_mask.grid, "reference mask");
  for (int i = 0; i < phase_count; ++i) {
    const auto n = std::to_string(i);
    Phase ph{io::read_volume(require(dir / ("phase_" + n + ".rtsv"))),
             io::read_mask(require(dir / ("phase_" + n + "_mask.rtsv")))};
    auto dvf = io::read_dvf(require(dir / ("dvf_" + n + ".rtsv")));
    const std::string what = "phase " + n;
    require_same_grid(out.reference.grid, ph.volume.grid, what.c_str());
    require_same_grid(out.reference.grid, ph.mask.grid, (what + " mask").c_str());
    require_same_grid(out.reference.grid, dvf.grid, (what + " dvf").c_str());
    out.phases.push_back(std::move(ph));
    out.dvfs.push_back(std::move(dvf));
  }
  return out;
}

}  // namespace rtsrts::phantom

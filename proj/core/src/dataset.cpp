#include "rtsrts/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rtsrts/error.hpp"
#include "rtsrts/rtsv_io.hpp"

namespace rtsrts::dataset {

namespace fs = std::filesystem;

namespace {

// Four taps per output coordinate along one axis.
struct Taps {
  std::array<std::int64_t, 4> index{};
  std::array<double, 4> weight{};
};

std::array<double, 4> catmull_rom(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t),
          0.5 * (t3 - t2)};
}

std::vector<Taps> axis_taps(const Grid3& src, const Grid3& dst, int axis, Interp interp) {
  const std::int64_t n = src.dims[axis];
  const double offset = (dst.origin[axis] - src.origin[axis]) / src.spacing[axis];
  const double ratio = dst.spacing[axis] / src.spacing[axis];
  std::vector<Taps> out(static_cast<std::size_t>(dst.dims[axis]));
  for (std::int64_t i = 0; i < dst.dims[axis]; ++i) {
    const double c = offset + static_cast<double>(i) * ratio;
    Taps t;
    if (interp == Interp::Nearest) {
      const auto k = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(c + 0.5)), 0, n - 1);
      t.index = {k, k, k, k};
      t.weight = {0.0, 1.0, 0.0, 0.0};
    } else {
      const double f = std::floor(c);
      const auto base = static_cast<std::int64_t>(f);
      const auto w = catmull_rom(c - f);
      for (int q = 0; q < 4; ++q) {
        t.index[q] = std::clamp<std::int64_t>(base - 1 + q, 0, n - 1);
        t.weight[q] = w[q];
      }
    }
    out[static_cast<std::size_t>(i)] = t;
  }
  return out;
}

// Resamples `components` interleaved channels.
template <typename In, typename Out>
std::vector<Out> resample_values(const std::vector<In>& src, const Grid3& sg, const Grid3& dg, int components,
                                 Interp interp) {
  const auto tx = axis_taps(sg, dg, 0, interp);
  const auto ty = axis_taps(sg, dg, 1, interp);
  const auto tz = axis_taps(sg, dg, 2, interp);
  std::vector<Out> out(static_cast<std::size_t>(dg.count() * components));
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < dg.nz(); ++k) {
    for (std::int64_t j = 0; j < dg.ny(); ++j) {
      for (std::int64_t i = 0; i < dg.nx(); ++i) {
        const auto& a = tx[static_cast<std::size_t>(i)];
        const auto& b = ty[static_cast<std::size_t>(j)];
        const auto& c = tz[static_cast<std::size_t>(k)];
        for (int comp = 0; comp < components; ++comp) {
          double acc = 0.0;
          for (int r = 0; r < 4; ++r) {
            if (c.weight[r] == 0.0) continue;
            for (int q = 0; q < 4; ++q) {
              if (b.weight[q] == 0.0) continue;
              const double wzy = c.weight[r] * b.weight[q];
              const std::int64_t row = sg.index(0, b.index[q], c.index[r]);
              for (int p = 0; p < 4; ++p) {
                if (a.weight[p] == 0.0) continue;
                acc += wzy * a.weight[p] *
                       static_cast<double>(src[static_cast<std::size_t>((row + a.index[p]) * components + comp)]);
              }
            }
          }
          out[static_cast<std::size_t>(dg.index(i, j, k) * components + comp)] = static_cast<Out>(acc);
        }
      }
    }
  }
  return out;
}

bool same_lattice(const Grid3& a, const Grid3& b) { return a == b; }

void require_unit_range(std::span<const float> v, const std::string& file) {
  for (float x : v) {
    if (!(x >= 0.0f && x <= 1.0f)) throw ValidationError(file + ": value outside [0,1]");
  }
}

std::string join_path(const std::string& id, const char* suffix) { return "samples/" + id + suffix; }

}  // namespace

Volume resample_to(const Volume& vol, const Grid3& target, Interp interp) {
  validate(vol);
  validate(target);
  if (same_lattice(vol.grid, target)) return vol;
  return Volume{target, resample_values<float, float>(vol.voxels, vol.grid, target, 1, interp)};
}

Mask resample_to(const Mask& mask, const Grid3& target) {
  validate(mask);
  validate(target);
  if (same_lattice(mask.grid, target)) return mask;
  return Mask{target,
              resample_values<std::uint8_t, std::uint8_t>(mask.voxels, mask.grid, target, 1, Interp::Nearest)};
}

DisplacementField resample_to(const DisplacementField& dvf, const Grid3& target) {
  validate(dvf);
  validate(target);
  if (same_lattice(dvf.grid, target)) return dvf;
  return DisplacementField{target, resample_values<float, float>(dvf.vectors, dvf.grid, target, 3, Interp::Cubic)};
}

Grid3 isotropic_grid(const Grid3& source, double spacing_mm) {
  validate(source);
  if (!(spacing_mm > 0.0)) throw ValidationError("target spacing must be positive");
  const auto ext = source.extent_mm();
  const auto c = source.center_mm();
  Grid3 g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = std::max<std::int64_t>(1, std::llround(ext[a] / spacing_mm));
    g.spacing[a] = spacing_mm;
    g.origin[a] = c[a] - 0.5 * (g.dims[a] - 1) * spacing_mm;
  }
  if (g.dims == source.dims && g.spacing == source.spacing) return source;
  return g;
}

Grid3 resized_grid(const Grid3& source, std::array<std::int64_t, 3> dims) {
  validate(source);
  const auto ext = source.extent_mm();
  const auto c = source.center_mm();
  Grid3 g;
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw ValidationError("resize dims must be positive");
    g.dims[a] = dims[a];
    g.spacing[a] = dims[a] == source.dims[a] ? source.spacing[a] : ext[a] / dims[a];
    g.origin[a] = dims[a] == source.dims[a] ? source.origin[a] : c[a] - 0.5 * (dims[a] - 1) * g.spacing[a];
  }
  return g;
}

Volume resample_isotropic(const Volume& vol, double spacing_mm, Interp interp) {
  return resample_to(vol, isotropic_grid(vol.grid, spacing_mm), interp);
}

Mask resample_isotropic(const Mask& mask, double spacing_mm) {
  return resample_to(mask, isotropic_grid(mask.grid, spacing_mm));
}

Projection resize_projection(const Projection& p, std::int64_t size) {
  if (size <= 0) throw ValidationError("projection size must be positive");
  Grid3 src;
  src.dims = {p.geometry.nu, p.geometry.nv, 1};
  src.spacing = {p.geometry.du, p.geometry.dv, 1.0};
  const Grid3 dst = resized_grid(src, {size, size, 1});
  Projection out;
  out.geometry = p.geometry;
  out.geometry.nu = out.geometry.nv = size;
  out.geometry.du = dst.spacing[0];
  out.geometry.dv = dst.spacing[1];
  out.pixels = resample_to(Volume{src, p.pixels}, dst, Interp::Cubic).voxels;
  return out;
}

void validate(const DatasetConfig& cfg) {
  if (cfg.input_size < 1 || cfg.output_size < 1) throw ConfigError("dataset sizes must be positive");
  if (cfg.n_samples < 1) throw ConfigError("dataset.n_samples must be positive");
  if (cfg.pca_rank != 3) throw ConfigError("dataset.pca_rank must be 3 (manifest stores c1..c3)");
  if (!(cfg.resample_spacing_mm > 0.0)) throw ConfigError("dataset.resample_spacing_mm must be positive");
  if (!(cfg.coeff_extrapolation >= 1.0)) throw ConfigError("dataset.coeff_extrapolation must be >= 1");
  if (!(cfg.detector_pixel_mm > 0.0)) throw ConfigError("dataset.detector_pixel_mm must be positive");
}

std::array<int, 3> split_counts(int n) {
  const int held = static_cast<int>(std::lround(n * 100.0 / 1080.0));
  return {n - 2 * held, held, held};
}

MotionSource prepare_source(const phantom::Phantom& p, const DatasetConfig& cfg) {
  validate(cfg);
  MotionSource src;
  const Grid3 g = isotropic_grid(p.reference.grid, cfg.resample_spacing_mm);
  src.reference = resample_to(p.reference, g, Interp::Cubic);
  src.reference_mask = resample_to(p.reference_mask, g);
  std::vector<DisplacementField> fields;
  fields.reserve(p.dvfs.size());
  for (const auto& f : p.dvfs) fields.push_back(resample_to(f, g));
  src.model = motion::fit_pca(fields, cfg.pca_rank);
  return src;
}

std::vector<const SampleRecord*> DatasetManifest::split(const std::string& name) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records) {
    if (r.split == name) out.push_back(&r);
  }
  return out;
}

const SampleRecord& DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw ValidationError("sample '" + id + "' is not in the manifest");
}

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%05d", index);
  return buf;
}

Sample generate_sample(const MotionSource& src, const DatasetConfig& cfg, int index,
                       std::optional<double> fixed_angle) {
  std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(index));
  const std::uint64_t coeff_seed = rng();
  double angle = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
  if (angle >= 360.0) angle = 0.0;
  if (fixed_angle) angle = *fixed_angle;

  Sample s;
  s.id = sample_id(index);
  s.angle_deg = angle;
  s.coeffs = motion::sample_coeffs(src.model, coeff_seed, cfg.coeff_extrapolation);
  const auto dvf = motion::synthesize_dvf(src.model, s.coeffs);
  const Volume vol = motion::warp_volume(src.reference, dvf);
  const Mask mask = motion::warp_mask(src.reference_mask, dvf);

  const Geometry geom =
      fit_detector(vol.grid, angle, cfg.beam, cfg.detector_pixel_mm, cfg.sad_mm, cfg.sdd_mm);
  s.projection = normalize_unit(resize_projection(render_drr(vol, geom), cfg.input_size));

  const auto n = static_cast<std::int64_t>(cfg.output_size);
  const Grid3 target = resized_grid(vol.grid, {n, n, n});
  s.volume = normalize_unit(resample_to(vol, target, Interp::Cubic));
  s.mask = resample_to(mask, target);
  return s;
}

namespace {

DatasetManifest build(const MotionSource& src, const DatasetConfig& cfg, const fs::path& dir,
                      const std::string& config_hash, std::optional<double> fixed_angle) {
  validate(cfg);
  if (fixed_angle && !(*fixed_angle >= 0.0 && *fixed_angle < 360.0)) {
    throw ValidationError("fixed angle must lie in [0,360)");
  }
  DatasetManifest m;
  m.root = dir;
  m.config_hash = config_hash;
  m.seed = cfg.seed;
  m.input_size = cfg.input_size;
  m.output_size = cfg.output_size;

  for (int i = 0; i < cfg.n_samples; ++i) {
    Sample s = generate_sample(src, cfg, i, fixed_angle);
    SampleRecord r;
    r.id = s.id;
    r.angle_deg = s.angle_deg;
    r.coeffs = s.coeffs;
    r.proj_path = join_path(s.id, "_proj.rtsv");
    r.vol_path = join_path(s.id, "_vol.rtsv");
    r.mask_path = join_path(s.id, "_mask.rtsv");
    try {
      io::write_projection(dir / r.proj_path, s.projection);
      io::write_volume(dir / r.vol_path, s.volume);
      io::write_mask(dir / r.mask_path, s.mask);
    } catch (const std::exception& e) {
      throw IoError("sample " + s.id + ": " + e.what());
    }
    m.records.push_back(std::move(r));
  }

  // Seeded Fisher-Yates over sample indices; the first block is validation,
  // the second test, the rest training.
  std::vector<int> order(static_cast<std::size_t>(cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  }
  const auto counts = split_counts(cfg.n_samples);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const char* name = pos < static_cast<std::size_t>(counts[1])                 ? "val"
                       : pos < static_cast<std::size_t>(counts[1] + counts[2]) ? "test"
                                                                                : "train";
    m.records[static_cast<std::size_t>(order[pos])].split = name;
  }
  write_manifest(m);
  return m;
}

}  // namespace

DatasetManifest build_dataset(const MotionSource& src, const DatasetConfig& cfg, const fs::path& dir,
                              const std::string& config_hash) {
  return build(src, cfg, dir, config_hash, std::nullopt);
}

DatasetManifest build_fixed_angle_dataset(const MotionSource& src, const DatasetConfig& cfg,
                                          const fs::path& dir, const std::string& config_hash,
                                          double angle_deg) {
  return build(src, cfg, dir, config_hash, angle_deg);
}

void write_manifest(const DatasetManifest& m) {
  std::ostringstream csv;
  csv << "id,split,angle_deg,c1,c2,c3,proj_path,vol_path,mask_path\n";
  for (const auto& r : m.records) {
    csv << r.id << ',' << r.split << ',' << io::format_double(r.angle_deg);
    for (double c : r.coeffs) csv << ',' << io::format_double(c);
    csv << ',' << r.proj_path << ',' << r.vol_path << ',' << r.mask_path << '\n';
  }
  io::write_text(m.root / "manifest.csv", csv.str());
  std::ostringstream meta;
  meta << "config_hash=" << m.config_hash << '\n'
       << "seed=" << m.seed << '\n'
       << "input_size=" << m.input_size << '\n'
       << "output_size=" << m.output_size << '\n'
       << "n_samples=" << m.records.size() << '\n';
  io::write_text(m.root / "manifest.meta", meta.str());
}

DatasetManifest read_manifest(const fs::path& dir) {
  DatasetManifest m;
  m.root = dir;
  const std::string meta_file = (dir / "manifest.meta").string();
  std::istringstream meta(io::read_text(dir / "manifest.meta"));
  std::string line;
  std::size_t expected = 0;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "config_hash") m.config_hash = value;
      else if (key == "seed") m.seed = std::stoull(value);
      else if (key == "input_size") m.input_size = std::stoi(value);
      else if (key == "output_size") m.output_size = std::stoi(value);
      else if (key == "n_samples") expected = std::stoull(value);
    } catch (const std::logic_error&) {
      throw IoError(meta_file + ": bad value for " + key);
    }
  }
  const std::string csv_file = (dir / "manifest.csv").string();
  std::istringstream csv(io::read_text(dir / "manifest.csv"));
  if (!std::getline(csv, line) || line != "id,split,angle_deg,c1,c2,c3,proj_path,vol_path,mask_path") {
    throw IoError(csv_file + ": unexpected header");
  }
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw IoError(csv_file + ": expected 9 fields in '" + line + "'");
    SampleRecord r;
    r.id = f[0];
    r.split = f[1];
    if (r.split != "train" && r.split != "val" && r.split != "test") {
      throw IoError(csv_file + ": unknown split '" + r.split + "'");
    }
    r.angle_deg = io::parse_double(f[2], csv_file);
    for (int c = 3; c < 6; ++c) r.coeffs.push_back(io::parse_double(f[c], csv_file));
    r.proj_path = f[6];
    r.vol_path = f[7];
    r.mask_path = f[8];
    m.records.push_back(std::move(r));
  }
  if (m.records.size() != expected) {
    throw IoError(csv_file + ": " + std::to_string(m.records.size()) + " records but meta says " +
                  std::to_string(expected));
  }
  return m;
}

Sample load_sample(const DatasetManifest& m, const std::string& id) {
  const SampleRecord& r = m.find(id);
  Sample s;
  s.id = r.id;
  s.split = r.split;
  s.angle_deg = r.angle_deg;
  s.coeffs = r.coeffs;
  const auto proj_file = (m.root / r.proj_path).string();
  const auto vol_file = (m.root / r.vol_path).string();
  const auto mask_file = (m.root / r.mask_path).string();
  s.projection = io::read_projection(proj_file);
  s.volume = io::read_volume(vol_file);
  s.mask = io::read_mask(mask_file);
  if (s.projection.geometry.nu != m.input_size || s.projection.geometry.nv != m.input_size) {
    throw ValidationError(proj_file + ": expected " + std::to_string(m.input_size) + "^2 pixels");
  }
  const auto n = static_cast<std::int64_t>(m.output_size);
  if (s.volume.grid.dims != std::array<std::int64_t, 3>{n, n, n}) {
    throw ValidationError(vol_file + ": expected " + std::to_string(n) + "^3 voxels, found " +
                          describe(s.volume.grid));
  }
  if (s.mask.grid != s.volume.grid) {
    throw ValidationError(mask_file + ": geometry " + describe(s.mask.grid) + " differs from volume " +
                          describe(s.volume.grid));
  }
  require_unit_range(s.projection.pixels, proj_file);
  require_unit_range(s.volume.voxels, vol_file);
  return s;
}

}  // namespace rtsrts::dataset

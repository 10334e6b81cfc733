#include "rtsrts/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "rtsrts/checkpoint.hpp"
#include "rtsrts/error.hpp"
#include "rtsrts/phantom.hpp"
#include "rtsrts/rtsv_io.hpp"

namespace rtsrts::harness {

std::string AngleMode::tag() const {
  if (!fixed_deg) return "random";
  return "fixed" + io::format_double(*fixed_deg);
}

AngleMode parse_angle_mode(const std::string& s) {
  if (s == "random") return {};
  if (s.rfind("fixed:", 0) == 0) {
    const double deg = io::parse_double(s.substr(6), "--angle");
    if (!(deg >= 0.0 && deg < 360.0)) throw ConfigError("--angle: fixed angle must lie in [0,360)");
    return {deg};
  }
  throw ConfigError("--angle: expected random or fixed:<deg>, got '" + s + "'");
}

Grid3 target_grid(const RunConfig& cfg) {
  const auto n = static_cast<std::int64_t>(cfg.dataset.output_size);
  return dataset::resized_grid(dataset::isotropic_grid(cfg.phantom.grid, cfg.dataset.resample_spacing_mm), {n, n, n});
}

namespace {

dataset::MotionSource make_source(const RunConfig& cfg) {
  return dataset::prepare_source(phantom::generate_phantom(cfg.phantom), cfg.dataset);
}

int index_of(const std::string& id) {
  try {
    return std::stoi(id.substr(1));
  } catch (const std::exception&) {
    throw ValidationError("cannot derive a sample index from id '" + id + "'");
  }
}

std::vector<dataset::Sample> load_samples(const dataset::DatasetManifest& m, const std::string& split) {
  std::vector<dataset::Sample> out;
  for (const auto* r : m.split(split)) out.push_back(dataset::load_sample(m, r->id));
  if (out.empty()) throw ValidationError("split '" + split + "' is empty in " + m.root.string());
  return out;
}

void require_compatible(const network::ModelState<float>& model, const dataset::DatasetManifest& m,
                        const fs::path& checkpoint) {
  if (model.config.input_size != m.input_size || model.config.output_size() != m.output_size) {
    throw ConfigError(checkpoint.string() + ": network size " + std::to_string(model.config.input_size) +
                      " does not match dataset size " + std::to_string(m.input_size));
  }
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(double(v), 0.0, 1.0) * 255.0));
}

std::string sigma_tag(double s) { return "sigma=" + io::format_double(s); }

}  // namespace

dataset::DatasetManifest cmd_synth(const RunConfig& cfg, const fs::path& out) {
  validate(cfg);
  write_resolved(cfg, out);
  const auto src = make_source(cfg);
  return dataset::build_dataset(src, cfg.dataset, out, dataset_hash(cfg));
}

TrainOutputs cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                       const training::EpochCallback& on_epoch) {
  validate(cfg);
  const auto manifest = dataset::read_manifest(data);
  write_resolved(cfg, out);
  const auto model = network::build(cfg.network, cfg.init_seed());
  TrainOutputs o;
  o.result = training::train(model, manifest, cfg.training, on_epoch);
  o.best_checkpoint = out / "checkpoint_best.rtsc";
  o.final_checkpoint = out / "checkpoint_final.rtsc";
  o.log_csv = out / "train_log.csv";
  checkpoint::save(o.best_checkpoint, o.result.best);
  checkpoint::save(o.final_checkpoint, o.result.final_model);
  io::write_text(o.log_csv, o.result.log.to_csv());
  return o;
}

void write_slice_dumps(const fs::path& dir, const std::string& id, const Volume& recon, const Volume& target,
                       const std::optional<Mask>& seg, const Mask& target_mask) {
  const Grid3& g = target.grid;
  const std::int64_t w = g.nx(), h = g.ny(), k = g.nz() / 2;
  std::vector<std::uint8_t> pair(static_cast<std::size_t>(2 * w * h));
  for (std::int64_t j = 0; j < h; ++j)
    for (std::int64_t i = 0; i < w; ++i) {
      pair[static_cast<std::size_t>(j * 2 * w + i)] = to_byte(recon.at(i, j, k));
      pair[static_cast<std::size_t>(j * 2 * w + w + i)] = to_byte(target.at(i, j, k));
    }
  io::write_pgm(dir / (id + "_recon.pgm"), 2 * w, h, pair);
  if (!seg) return;
  std::vector<std::uint8_t> overlay(static_cast<std::size_t>(w * h));
  for (std::int64_t j = 0; j < h; ++j)
    for (std::int64_t i = 0; i < w; ++i) {
      const auto idx = static_cast<std::size_t>(g.index(i, j, k));
      const bool p = seg->voxels[idx] != 0, t = target_mask.voxels[idx] != 0;
      overlay[static_cast<std::size_t>(j * w + i)] = p && t ? 255 : p ? 160 : t ? 64 : 0;
    }
  io::write_pgm(dir / (id + "_overlay.pgm"), w, h, overlay);
}

metrics::EvalReport cmd_eval(const RunConfig& cfg, const fs::path& ckpt, const fs::path& data,
                             const std::string& split, const AngleMode& angle, const fs::path& out) {
  const auto model = checkpoint::load(ckpt);
  const auto manifest = dataset::read_manifest(data);
  require_compatible(model, manifest, ckpt);
  std::vector<dataset::Sample> samples = load_samples(manifest, split);
  if (angle.fixed_deg) {
    if (manifest.config_hash != dataset_hash(cfg)) {
      throw ConfigError("fixed-angle evaluation regenerates samples, but the config hash " + dataset_hash(cfg) +
                        " differs from the dataset's " + manifest.config_hash);
    }
    const auto src = make_source(cfg);
    for (auto& s : samples) {
      auto fixed = dataset::generate_sample(src, cfg.dataset, index_of(s.id), angle.fixed_deg);
      fixed.split = s.split;
      s = std::move(fixed);
    }
  }
  write_resolved(cfg, out);
  const std::string tag = split + "_" + angle.tag();
  auto report = metrics::evaluate_suite(model, samples, tag);
  io::write_text(out / ("eval_" + tag + ".csv"), report.to_csv());

  tensor::NoGradGuard guard;
  for (const auto& s : samples) {
    const auto fwd = network::forward(model, training::to_tensors(s).projection);
    std::optional<Mask> seg;
    if (fwd.seg.defined()) seg = metrics::binarize_seg(fwd.seg, s.volume.grid);
    write_slice_dumps(out / "slices", s.id + "_" + angle.tag(), metrics::to_volume(fwd.recon, s.volume.grid),
                      s.volume, seg, s.mask);
  }
  return report;
}

std::vector<metrics::EvalReport> cmd_noise_sweep(const RunConfig& cfg, const fs::path& ckpt, const fs::path& data,
                                                 const fs::path& out) {
  validate(cfg);
  const auto model = checkpoint::load(ckpt);
  const auto manifest = dataset::read_manifest(data);
  require_compatible(model, manifest, ckpt);
  const auto samples = load_samples(manifest, "test");
  write_resolved(cfg, out);

  std::vector<metrics::EvalReport> reports;
  std::ostringstream table;
  table << "# noise: i.i.d. Gaussian, std = sigma_ratio x normalized intensity range (1.0), added after "
           "normalization, clamped to [0,1]\n";
  table << "sigma";
  for (const auto& c : metrics::EvalReport::columns()) table << ',' << c << "_mean," << c << "_std";
  table << '\n';
  for (double sigma : cfg.noise_sigmas) {
    auto rep = metrics::evaluate_suite(model, samples, sigma_tag(sigma), sigma, cfg.noise_seed());
    io::write_text(out / ("noise_" + io::format_double(sigma) + ".csv"), rep.to_csv());
    table << io::format_double(sigma);
    for (const auto& c : metrics::EvalReport::columns()) {
      const auto a = rep.aggregate(c);
      if (a.count == 0) {
        table << ",,";
      } else {
        table << ',' << io::format_double(a.mean) << ',' << io::format_double(a.std);
      }
    }
    table << '\n';
    reports.push_back(std::move(rep));
  }
  io::write_text(out / "noise_sweep.csv", table.str());
  return reports;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                                    const training::EpochCallback& on_epoch) {
  validate(cfg);
  const auto manifest = dataset::read_manifest(data);
  const auto train_set = training::load_split(manifest, "train");
  const auto val_set = training::load_split(manifest, "val");
  const auto test = load_samples(manifest, "test");
  write_resolved(cfg, out);

  struct Flags {
    const char* name;
    bool seg, aec, ure;
  };
  const Flags rows[] = {{"baseline", false, false, false},
                        {"+seg", true, false, false},
                        {"+seg+aec", true, true, false},
                        {"+seg+aec+ure", true, true, true}};
  std::vector<AblationRow> result;
  std::ostringstream table;
  table << "row,seg,aec,ure,manifest_hash";
  for (const auto& c : metrics::EvalReport::columns()) table << ',' << c << "_mean," << c << "_std";
  table << '\n';
  for (const auto& f : rows) {
    auto net = cfg.network;
    net.enable_seg_branch = f.seg;
    net.enable_aec = f.aec;
    net.enable_ure = f.ure;
    auto tc = cfg.training;
    if (!f.seg) tc.alpha2 = 0.0;
    const auto model = network::build(net, cfg.init_seed());
    const auto trained = training::train(model, train_set, val_set, tc, on_epoch);
    AblationRow row{f.name, f.seg, f.aec, f.ure, manifest.config_hash,
                    metrics::evaluate_suite(trained.best, test, std::string("ablate_") + f.name)};
    const std::string slug = std::string(f.name) == "baseline" ? "baseline" : std::string(f.name).substr(1);
    checkpoint::save(out / ("ablate_" + slug + ".rtsc"), trained.best);
    io::write_text(out / ("ablate_" + slug + ".csv"), row.report.to_csv());
    table << f.name << ',' << f.seg << ',' << f.aec << ',' << f.ure << ',' << row.manifest_hash;
    for (const auto& c : metrics::EvalReport::columns()) {
      const auto a = row.report.aggregate(c);
      if (a.count == 0) {
        table << ",,";
      } else {
        table << ',' << io::format_double(a.mean) << ',' << io::format_double(a.std);
      }
    }
    table << '\n';
    result.push_back(std::move(row));
  }
  io::write_text(out / "ablation.csv", table.str());
  return result;
}

InferStats cmd_infer(const RunConfig& cfg, const fs::path& ckpt, const fs::path& projection, int repetitions,
                     const fs::path& out) {
  if (repetitions < 2) throw ConfigError("--reps must be >= 2 (the first pass is a warm-up)");
  const auto model = checkpoint::load(ckpt);
  const Projection proj = io::read_projection(projection);
  const auto s = model.config.input_size;
  if (proj.geometry.nu != s || proj.geometry.nv != s) {
    throw ConfigError(projection.string() + ": " + std::to_string(proj.geometry.nu) + "x" +
                      std::to_string(proj.geometry.nv) + " pixels, checkpoint expects " + std::to_string(s) + "x" +
                      std::to_string(s));
  }
  Grid3 grid = target_grid(cfg);
  if (grid.dims[0] != s) {
    const auto n = static_cast<std::int64_t>(s);
    grid = dataset::resized_grid(grid, {n, n, n});
  }
  const auto input = tensor::Tensor<float>::from({1, s, s}, proj.pixels);

  tensor::NoGradGuard guard;
  InferStats stats;
  Volume recon;
  Mask mask;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto fwd = network::forward(model, input);
    Mask m = fwd.seg.defined() ? metrics::binarize_seg(fwd.seg, grid) : Mask::filled(grid, 0);
    const auto c = metrics::centroid_mm(m);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (rep > 0) stats.latencies_ms.push_back(ms);
    if (rep == repetitions - 1) {
      recon = metrics::to_volume(fwd.recon, grid);
      mask = std::move(m);
      stats.centroid_mm = c;
    }
  }
  auto sorted = stats.latencies_ms;
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  stats.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  stats.p95_ms = sorted[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * double(n))) - 1)];

  write_resolved(cfg, out);
  io::write_volume(out / "recon.rtsv", recon);
  io::write_mask(out / "mask.rtsv", mask);
  nlohmann::json j = {{"checkpoint", ckpt.string()},
                      {"projection", projection.string()},
                      {"repetitions", repetitions},
                      {"timed_passes", stats.latencies_ms.size()},
                      {"median_ms", stats.median_ms},
                      {"p95_ms", stats.p95_ms},
                      {"latencies_ms", stats.latencies_ms},
                      {"tumor_voxels", mask.count()}};
  if (stats.centroid_mm) {
    j["centroid_mm"] = *stats.centroid_mm;
  } else {
    j["centroid_mm"] = nullptr;
  }
  io::write_text(out / "infer.json", j.dump(2) + "\n");
  return stats;
}

std::string cmd_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::ostringstream os;
  os << "file,stat,tag,mae,mse,rmse,psnr_db,ssim,dice,comd_mm\n";
  for (const auto& f : files) {
    std::istringstream in(io::read_text(f));
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("aggregate_", 0) == 0) {
        os << fs::relative(f, dir).string() << ',' << line.substr(10) << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace rtsrts::harness

#include "rtsrts/run_config.hpp"

#include <set>

#include <json.hpp>

#include "rtsrts/error.hpp"
#include "rtsrts/rtsv_io.hpp"

namespace rtsrts {

using nlohmann::json;

RunConfig preset(const std::string& scale) {
  RunConfig c;
  c.scale = scale;
  if (scale == "desk") {
    c.phantom = phantom::PhantomSpec::desk();
    c.dataset.n_samples = 120;
    c.dataset.input_size = c.dataset.output_size = 32;
    c.network.base_channels = 16;
    c.training.epochs = 60;
    c.training.decay_start = 30;
  } else if (scale == "paper") {
    c.phantom = phantom::PhantomSpec::paper();
    c.dataset.n_samples = 1080;
    c.dataset.input_size = c.dataset.output_size = 128;
    c.network.base_channels = 64;
    c.training.epochs = 100;
    c.training.decay_start = 50;
  } else {
    throw ConfigError("scale: unknown preset '" + scale + "' (expected desk|paper)");
  }
  finalize(c);
  return c;
}

void finalize(RunConfig& c) {
  c.dataset.seed = c.seed;
  c.training.seed = c.seed + 2;
  c.network.input_size = c.dataset.input_size;
}

void validate(const RunConfig& c) {
  try {
    phantom::validate(c.phantom);
    dataset::validate(c.dataset);
    network::validate(c.network);
    training::validate(c.training);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (c.dataset.output_size != c.dataset.input_size) {
    throw ConfigError("dataset.output_size must equal dataset.input_size");
  }
  if (c.noise_sigmas.empty()) throw ConfigError("eval.noise_sigmas must not be empty");
  for (double s : c.noise_sigmas) {
    if (!(s >= 0.0)) throw ConfigError("eval.noise_sigmas entries must be >= 0");
  }
  if (c.repetitions < 2) throw ConfigError("eval.repetitions must be >= 2 (first pass is warm-up)");
}

namespace {

// Reads allowed keys from a JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Section() = default;

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json phantom_json(const phantom::PhantomSpec& p) {
  return {{"dims", p.grid.dims},
          {"spacing_mm", p.grid.spacing},
          {"breathing_amplitude_mm", p.breathing_amplitude_mm},
          {"compression_factor", p.compression_factor},
          {"seed", p.seed}};
}

json dataset_json(const dataset::DatasetConfig& d) {
  return {{"n_samples", d.n_samples},
          {"input_size", d.input_size},
          {"output_size", d.output_size},
          {"resample_spacing_mm", d.resample_spacing_mm},
          {"pca_rank", d.pca_rank},
          {"coeff_extrapolation", d.coeff_extrapolation},
          {"beam", to_string(d.beam)},
          {"sad_mm", d.sad_mm},
          {"sdd_mm", d.sdd_mm},
          {"detector_pixel_mm", d.detector_pixel_mm}};
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section top(root, "");
  std::string scale = "desk";
  top.get("scale", scale);
  RunConfig c = preset(scale);
  top.get("seed", c.seed);
  top.get("out_dir", c.out_dir);

  if (const json* j = top.child("phantom")) {
    Section s(*j, "phantom");
    std::array<std::int64_t, 3> dims = c.phantom.grid.dims;
    std::array<double, 3> spacing = c.phantom.grid.spacing;
    s.get("dims", dims);
    s.get("spacing_mm", spacing);
    std::uint64_t seed = c.phantom.seed;
    s.get("seed", seed);
    if (dims != c.phantom.grid.dims || spacing != c.phantom.grid.spacing || seed != c.phantom.seed) {
      Grid3 g;
      g.dims = dims;
      g.spacing = spacing;
      try {
        validate(g);
      } catch (const ValidationError& e) {
        throw ConfigError(std::string("phantom: ") + e.what());
      }
      c.phantom = phantom::PhantomSpec::for_grid(g, seed);
    }
    const double old_amp = c.phantom.breathing_amplitude_mm;
    s.get("breathing_amplitude_mm", c.phantom.breathing_amplitude_mm);
    c.phantom.apex_start_mm += c.phantom.breathing_amplitude_mm - old_amp;
    s.get("compression_factor", c.phantom.compression_factor);
    s.finish();
  }
  if (const json* j = top.child("dataset")) {
    Section s(*j, "dataset");
    auto& d = c.dataset;
    s.get("n_samples", d.n_samples);
    s.get("input_size", d.input_size);
    s.get("output_size", d.output_size);
    s.get("resample_spacing_mm", d.resample_spacing_mm);
    s.get("pca_rank", d.pca_rank);
    s.get("coeff_extrapolation", d.coeff_extrapolation);
    std::string beam = to_string(d.beam);
    s.get("beam", beam);
    try {
      d.beam = beam_from_string(beam);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("dataset.beam: ") + e.what());
    }
    s.get("sad_mm", d.sad_mm);
    s.get("sdd_mm", d.sdd_mm);
    s.get("detector_pixel_mm", d.detector_pixel_mm);
    s.finish();
  }
  if (const json* j = top.child("network")) {
    Section s(*j, "network");
    auto& n = c.network;
    s.get("levels", n.levels);
    s.get("base_channels", n.base_channels);
    s.get("enable_seg_branch", n.enable_seg_branch);
    s.get("enable_aec", n.enable_aec);
    s.get("enable_ure", n.enable_ure);
    s.get("attention_residual_init", n.attention_residual_init);
    s.get("aec_norm", n.aec_norm);
    std::string mode = network::to_string(n.bottleneck);
    s.get("bottleneck", mode);
    try {
      n.bottleneck = network::bottleneck_from_string(mode);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("network.bottleneck: ") + e.what());
    }
    s.get("leaky_slope", n.leaky_slope);
    s.finish();
  }
  if (const json* j = top.child("training")) {
    Section s(*j, "training");
    auto& t = c.training;
    s.get("epochs", t.epochs);
    s.get("lr0", t.lr0);
    s.get("decay_start", t.decay_start);
    s.get("beta1", t.beta1);
    s.get("beta2", t.beta2);
    s.get("eps", t.eps);
    s.get("alpha1", t.alpha1);
    s.get("alpha2", t.alpha2);
    s.get("deep_supervision", t.deep_supervision);
    s.finish();
  }
  if (const json* j = top.child("eval")) {
    Section s(*j, "eval");
    s.get("noise_sigmas", c.noise_sigmas);
    s.get("repetitions", c.repetitions);
    s.finish();
  }
  top.finish();
  finalize(c);
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return parse_run_config(io::read_text(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string resolved_json(const RunConfig& c) {
  const auto& n = c.network;
  const auto& t = c.training;
  json j = {{"scale", c.scale},
            {"seed", c.seed},
            {"out_dir", c.out_dir},
            {"phantom", phantom_json(c.phantom)},
            {"dataset", dataset_json(c.dataset)},
            {"network",
             {{"levels", n.levels},
              {"base_channels", n.base_channels},
              {"enable_seg_branch", n.enable_seg_branch},
              {"enable_aec", n.enable_aec},
              {"enable_ure", n.enable_ure},
              {"attention_residual_init", n.attention_residual_init},
              {"aec_norm", n.aec_norm},
              {"bottleneck", network::to_string(n.bottleneck)},
              {"leaky_slope", n.leaky_slope}}},
            {"training",
             {{"epochs", t.epochs},
              {"lr0", t.lr0},
              {"decay_start", t.decay_start},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"eps", t.eps},
              {"alpha1", t.alpha1},
              {"alpha2", t.alpha2},
              {"deep_supervision", t.deep_supervision}}},
            {"eval", {{"noise_sigmas", c.noise_sigmas}, {"repetitions", c.repetitions}}}};
  return j.dump(2) + "\n";
}

std::string dataset_hash(const RunConfig& c) {
  json j = {{"seed", c.seed},
            {"phantom", phantom_json(c.phantom)},
            {"dataset", dataset_json(c.dataset)},
            {"angle_law", "uniform[0,360)"}};
  return io::hex32(io::crc32_of(j.dump()));
}

void write_resolved(const RunConfig& c, const std::filesystem::path& dir) {
  io::write_text(dir / "resolved_config.json", resolved_json(c));
}

}  // namespace rtsrts

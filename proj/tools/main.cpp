#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rtsrts/error.hpp"
#include "rtsrts/harness.hpp"
#include "rtsrts/rtsv_io.hpp"
#include "rtsrts/run_config.hpp"

namespace {

using namespace rtsrts;

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::string angle = "random";
  std::string projection;
  std::string report_dir;
  std::uint64_t seed = 0;
  int reps = 0;
};

RunConfig resolve(const Options& o, const CLI::App& cmd) {
  RunConfig cfg = o.config.empty() ? preset("desk") : load_run_config(o.config);
  if (cmd.count("--seed")) {
    cfg.seed = o.seed;
    finalize(cfg);
  }
  if (cmd.get_option_no_throw("--reps") && cmd.count("--reps")) cfg.repetitions = o.reps;
  if (!o.out.empty()) cfg.out_dir = o.out;
  validate(cfg);
  return cfg;
}

void print_epoch(const training::EpochLog& e) {
  std::fprintf(stderr, "epoch %d lr %.3g train_mse %.5f train_bce %.5f val_total %.5f (%.1fs)\n", e.epoch, e.lr,
               e.train_mse, e.train_bce, e.val_total, e.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-projection CT reconstruction and tumor segmentation harness"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "JSON run configuration (default: desk preset)");
    c->add_option("--out", o.out, "Output directory");
    c->add_option("--seed", o.seed, "Experiment seed");
  };
  auto* synth = app.add_subcommand("synth", "Generate phantom, motion model and dataset");
  common(synth);
  auto* train = app.add_subcommand("train", "Train on a dataset");
  common(train);
  train->add_option("--data", o.data, "Dataset directory (manifest.csv)")->required();
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  common(eval);
  eval->add_option("--data", o.data, "Dataset directory")->required();
  eval->add_option("--checkpoint", o.checkpoint, "RTSC1 checkpoint")->required();
  eval->add_option("--split", o.split, "train|val|test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--angle", o.angle, "random | fixed:<deg>");
  auto* noise = app.add_subcommand("noise-sweep", "Evaluate the test split under projection noise");
  common(noise);
  noise->add_option("--data", o.data, "Dataset directory")->required();
  noise->add_option("--checkpoint", o.checkpoint, "RTSC1 checkpoint")->required();
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the four ablation rows");
  common(ablate);
  ablate->add_option("--data", o.data, "Dataset directory")->required();
  auto* infer = app.add_subcommand("infer", "Reconstruct one projection and time inference");
  common(infer);
  infer->add_option("--checkpoint", o.checkpoint, "RTSC1 checkpoint")->required();
  infer->add_option("--projection", o.projection, "Projection RTSV1 file")->required();
  infer->add_option("--reps", o.reps, "Repetitions including one warm-up pass");
  auto* report = app.add_subcommand("report", "Summarize report CSVs in a directory");
  report->add_option("dir", o.report_dir, "Directory holding report CSVs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "rtsrts: error: kind=usage msg=%s\n", e.what());
    return 2;
  }

  try {
    if (*report) {
      std::cout << harness::cmd_report(o.report_dir);
      return 0;
    }
    CLI::App* cmd = app.get_subcommands().front();
    const RunConfig cfg = resolve(o, *cmd);
    const std::filesystem::path out = cfg.out_dir;
    if (*synth) {
      const auto m = harness::cmd_synth(cfg, out);
      const auto counts = dataset::split_counts(static_cast<int>(m.records.size()));
      std::printf("samples=%zu train=%d val=%d test=%d hash=%s\n", m.records.size(), counts[0], counts[1],
                  counts[2], m.config_hash.c_str());
    } else if (*train) {
      const auto r = harness::cmd_train(cfg, o.data, out, print_epoch);
      std::printf("best_epoch=%d checkpoint=%s\n", r.result.log.best_epoch, r.best_checkpoint.string().c_str());
    } else if (*eval) {
      const auto rep = harness::cmd_eval(cfg, o.checkpoint, o.data, o.split, harness::parse_angle_mode(o.angle), out);
      std::cout << rep.to_csv();
    } else if (*noise) {
      harness::cmd_noise_sweep(cfg, o.checkpoint, o.data, out);
      std::cout << io::read_text(out / "noise_sweep.csv");
    } else if (*ablate) {
      harness::cmd_ablate(cfg, o.data, out, print_epoch);
      std::cout << io::read_text(out / "ablation.csv");
    } else if (*infer) {
      const auto s = harness::cmd_infer(cfg, o.checkpoint, o.projection, cfg.repetitions, out);
      std::printf("timed_passes=%zu median_ms=%.3f p95_ms=%.3f", s.latencies_ms.size(), s.median_ms, s.p95_ms);
      if (s.centroid_mm) {
        std::printf(" centroid_mm=%.3f,%.3f,%.3f\n", (*s.centroid_mm)[0], (*s.centroid_mm)[1], (*s.centroid_mm)[2]);
      } else {
        std::printf(" centroid_mm=undefined\n");
      }
    }
  } catch (const rtsrts::Error& e) {
    std::fprintf(stderr, "rtsrts: error: kind=%s msg=%s\n", e.kind().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "rtsrts: error: kind=internal msg=%s\n", e.what());
    return 1;
  }
  return 0;
}

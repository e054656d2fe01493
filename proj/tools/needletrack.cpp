// needletrack: generate / calibrate / train / eval / predict / bench.
//
// Exit status: 0 success, 1 usage error, 2 data or validation error.
// Diagnostics go to stderr; predictions and reports to stdout.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "needletrack/calibrate.hpp"
#include "needletrack/dataset_io.hpp"
#include "needletrack/experiment.hpp"
#include "needletrack/harness.hpp"
#include "needletrack/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace needletrack;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
  std::string poses;
  std::string image;
  std::string out;
};

ExperimentConfig load_config(const Options& opts) {
  ExperimentConfig cfg = opts.config_path.empty() ? ExperimentConfig{}
                                                  : ExperimentConfig::from_file(opts.config_path);
  for (const auto& assignment : opts.overrides) cfg.apply_override(assignment);
  cfg.validate();
  if (opts.print_config) std::cerr << cfg.to_json().dump(2) << '\n';
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

Dataset load_dataset_for(const ExperimentConfig& cfg) {
  Dataset ds = read_dataset(cfg.paths.dataset_dir);
  if (ds.optics.image_side != cfg.network.input_side) {
    throw DataError("dataset '" + cfg.paths.dataset_dir + "' has " +
                    std::to_string(ds.optics.image_side) + " px frames but network.input_side is " +
                    std::to_string(cfg.network.input_side));
  }
  return ds;
}

int run_generate(const Options& opts) {
  const ExperimentConfig cfg = load_config(opts);
  Dataset ds;
  ds.optics = cfg.optics;
  ds.normalization = cfg.normalization;
  ds.records = generate_dataset(cfg.dataset.n, cfg.optics, cfg.normalization, cfg.dataset_seed());
  write_dataset(cfg.paths.dataset_dir, ds, {cfg.dataset.raw_sidecar});
  std::cerr << "wrote " << ds.records.size() << " records to " << cfg.paths.dataset_dir << '\n';
  return 0;
}

int run_calibrate(const Options& opts) {
  const std::vector<Pose> poses = read_pose_file(opts.poses);
  const PivotCalibration cal = pivot_calibrate(poses);
  const json report = {
      {"tip_offset_cm", {cal.tip_offset(0), cal.tip_offset(1), cal.tip_offset(2)}},
      {"pivot_point_cm", {cal.pivot_point(0), cal.pivot_point(1), cal.pivot_point(2)}},
      {"rms_residual_cm", cal.rms_residual},
      {"condition_number", cal.condition_number},
      {"n_poses", poses.size()}};
  if (opts.out.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    write_text(opts.out, report.dump(2) + "\n");
  }
  return 0;
}

int run_train(const Options& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const Dataset ds = load_dataset_for(cfg);
  const DatasetSplit split = split_dataset(ds.records, cfg.train.split_ratio, cfg.split_seed());
  std::cerr << "training on " << split.train.size() << " of " << ds.records.size()
            << " records for " << cfg.train.epochs << " epochs\n";

  TrainConfig tc = cfg.train_config();
  if (!tc.checkpoint_path.empty()) ensure_parent(tc.checkpoint_path);
  const std::size_t report_every = std::max<std::size_t>(1, cfg.train.epochs / 20);
  TrainResult result = train(split.train, tc, cfg.network, cfg.normalization,
                             ds.optics.max_count, [&](std::size_t epoch, double loss) {
                               if (epoch % report_every == 0 || epoch == 1) {
                                 std::fprintf(stderr, "epoch %zu/%zu  train_mse %.6g\n", epoch,
                                              cfg.train.epochs, loss);
                               }
                             });
  if (result.label_range_violations > 0) {
    std::cerr << "warning: " << result.label_range_violations
              << " training labels fall outside the normalization ranges\n";
  }
  ensure_parent(cfg.paths.weights);
  save_model(cfg.paths.weights, result.model);
  ensure_parent(cfg.paths.loss_csv);
  write_loss_csv(cfg.paths.loss_csv, result.loss_history);
  std::cerr << "wrote " << cfg.paths.weights << " and " << cfg.paths.loss_csv << '\n';
  return 0;
}

int run_eval(const Options& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const Dataset ds = load_dataset_for(cfg);
  const TrainedModel model = load_model(cfg.paths.weights);
  const DatasetSplit split = split_dataset(ds.records, cfg.train.split_ratio, cfg.split_seed());
  const Metrics metrics = evaluate(model, split.test, cfg.normalization);
  write_text(cfg.paths.metrics, metrics_to_json(metrics, cfg.digest()).dump(2) + "\n");
  const std::string table = metrics_table(metrics);
  write_text(cfg.paths.metrics_table, table);
  std::cout << table;
  return 0;
}

int run_predict(const Options& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const TrainedModel model = load_model(cfg.paths.weights);
  const TipPosition tip = predict_position(model, read_frame(opts.image));
  std::printf("%.6f %.6f %.6f\n", tip.x, tip.y, tip.z);
  return 0;
}

int run_bench(const Options& opts) {
  const ExperimentConfig cfg = load_config(opts);
  std::optional<TrainedModel> trained;
  if (fs::exists(cfg.paths.weights)) trained = load_model(cfg.paths.weights);

  std::vector<BenchmarkReport> reports;
  for (std::size_t side : cfg.bench.sides) {
    TrainedModel model;
    if (trained && trained->network.input_side == side) {
      model = *trained;
    } else {
      model.network = cfg.network;
      model.network.input_side = side;
      model.normalization = cfg.normalization;
      model.input_max_count = cfg.optics.max_count;
      model.params = build_network<float>(model.network, derive_seed(cfg.seed, "init"));
    }
    OpticsConfig optics = cfg.optics;
    optics.image_side = side;
    reports.push_back(benchmark_inference(model, optics, cfg.bench.n_runs, cfg.bench.warmup));
    const auto& r = reports.back();
    std::fprintf(stdout, "%4zu px  total mean %.3f ms  p50 %.3f  p95 %.3f  (inference %.3f, preprocess %.3f)\n",
                 side, r.total.mean_ms, r.total.p50_ms, r.total.p95_ms, r.inference.mean_ms,
                 r.preprocess.mean_ms);
  }
  std::fprintf(stdout, "reference: %.0f ms per frame (published real-time figure)\n",
               kReferenceLatencyMs);
  write_text(cfg.paths.bench, benchmark_to_json(reports).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Needle-tip tracking from scattering images: simulate, calibrate, train, evaluate"};
  app.require_subcommand(1);
  Options opts;

  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--set", opts.overrides, "Override a config field: dotted.key=value")
        ->allow_extra_args(false);
    sub->add_flag("--print-config", opts.print_config, "Echo the effective config to stderr");
  };

  auto* generate = app.add_subcommand("generate", "Render a labelled synthetic dataset");
  add_config_flags(generate);
  auto* calibrate = app.add_subcommand("calibrate", "Pivot calibration from a pose file");
  calibrate->add_option("--poses", opts.poses, "Pose list (JSON)")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--out", opts.out, "Write the calibration JSON here instead of stdout");
  auto* train_cmd = app.add_subcommand("train", "Train on the dataset's training split");
  add_config_flags(train_cmd);
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate on the dataset's test split");
  add_config_flags(eval_cmd);
  auto* predict_cmd = app.add_subcommand("predict", "Predict the tip (x y z, cm) for one frame");
  add_config_flags(predict_cmd);
  predict_cmd->add_option("--image", opts.image, "PNG or .f32 frame")->required()->check(CLI::ExistingFile);
  auto* bench = app.add_subcommand("bench", "Per-frame inference latency");
  add_config_flags(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*generate) return run_generate(opts);
    if (*calibrate) return run_calibrate(opts);
    if (*train_cmd) return run_train(opts);
    if (*eval_cmd) return run_eval(opts);
    if (*predict_cmd) return run_predict(opts);
    if (*bench) return run_bench(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

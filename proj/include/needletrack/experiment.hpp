#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "needletrack/harness.hpp"
#include "needletrack/json_io.hpp"

namespace needletrack {

struct DatasetSettings {
  std::size_t n = 606;
  bool raw_sidecar = false;
};

struct PathSettings {
  std::string dataset_dir = "data";
  std::string weights = "model.ntwt";
  std::string loss_csv = "loss.csv";
  std::string metrics = "metrics.json";
  std::string metrics_table = "metrics.txt";
  std::string bench = "bench.json";
};

struct BenchSettings {
  std::size_t n_runs = 100;
  std::size_t warmup = 5;
  /// Input sides to time. A side matching the trained model uses its
  /// weights; others use a freshly initialised network of that size.
  std::vector<std::size_t> sides = {64, 400};
};

/// One document for a whole generate/train/eval run. Defaults are desk
/// scale: 64 px frames and network input.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  OpticsConfig optics = OpticsConfig::desk_scale();
  NormalizationConfig normalization;
  NetworkConfig network = NetworkConfig::desk_scale();
  TrainConfig train;
  AdamWConfig optimizer;
  DatasetSettings dataset;
  PathSettings paths;
  BenchSettings bench;

  /// Embedded invariants plus optics.image_side == network.input_side.
  void validate() const;

  /// Train settings with the experiment seed and optimizer folded in.
  TrainConfig train_config() const;
  std::uint64_t dataset_seed() const { return derive_seed(seed, "dataset"); }
  std::uint64_t split_seed() const { return derive_seed(seed, "split"); }

  json to_json() const;
  /// Defaults overlaid with `doc`; unknown keys and wrong types throw.
  static ExperimentConfig from_json(const json& doc);
  static ExperimentConfig from_file(const std::filesystem::path& path);

  /// Applies "dotted.key=value". The value is parsed as JSON when possible
  /// and taken as a string otherwise. The key must already exist.
  void apply_override(std::string_view assignment);

  /// FNV-1a of the canonical JSON form, as 16 hex digits.
  std::string digest() const;
};

template <typename F>
void visit_fields(TrainConfig& c, F&& f) {
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("split_ratio", c.split_ratio);
  f("checkpoint_path", c.checkpoint_path);
  f("checkpoint_every", c.checkpoint_every);
}

template <typename F>
void visit_fields(DatasetSettings& c, F&& f) {
  f("n", c.n);
  f("raw_sidecar", c.raw_sidecar);
}

template <typename F>
void visit_fields(PathSettings& c, F&& f) {
  f("dataset_dir", c.dataset_dir);
  f("weights", c.weights);
  f("loss_csv", c.loss_csv);
  f("metrics", c.metrics);
  f("metrics_table", c.metrics_table);
  f("bench", c.bench);
}

template <typename F>
void visit_fields(BenchSettings& c, F&& f) {
  f("n_runs", c.n_runs);
  f("warmup", c.warmup);
  f("sides", c.sides);
}

template <typename F>
void visit_fields(ExperimentConfig& c, F&& f) {
  f("seed", c.seed);
  f("optics", c.optics);
  f("normalization", c.normalization);
  f("network", c.network);
  f("train", c.train);
  f("optimizer", c.optimizer);
  f("dataset", c.dataset);
  f("paths", c.paths);
  f("bench", c.bench);
}

}  // namespace needletrack

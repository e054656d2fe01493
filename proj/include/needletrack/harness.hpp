#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "needletrack/model.hpp"
#include "needletrack/optim.hpp"
#include "needletrack/preprocess.hpp"
#include "needletrack/simulate.hpp"

namespace needletrack {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  /// Empty disables checkpointing.
  std::string checkpoint_path;
  std::size_t checkpoint_every = 25;
  AdamWConfig optimizer;

  void validate() const;
};

/// Everything needed to turn a raw frame into a tip position.
struct TrainedModel {
  NetworkConfig network;
  NormalizationConfig normalization;
  double input_max_count = 255.0;
  ParameterSet<float> params;
};

struct TrainResult {
  TrainedModel model;
  /// Mean train-mode MSE (normalized units) per epoch.
  std::vector<double> loss_history;
  std::size_t label_range_violations = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct DatasetSplit {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
};

/// Seeded shuffle; the first round(ratio * n) indices train, the rest test.
SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed);
DatasetSplit split_dataset(std::span<const SampleRecord> dataset, double ratio, std::uint64_t seed);

/// Raw frame (counts) -> network input (C,S,S) in [0,1].
Tensor<float> prepare_input(const Tensor<float>& raw, const NetworkConfig& network,
                            double max_count);

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Mini-batch training: train-mode forward, MSE on normalized targets,
/// backward, one AdamW step per batch. Weights come from the "init" stream
/// of config.seed, shuffling from "shuffle", dropout masks from "dropout".
TrainResult train(std::span<const SampleRecord> train_set, const TrainConfig& config,
                  const NetworkConfig& network, const NormalizationConfig& normalization,
                  double max_count = 255.0, const EpochCallback& on_epoch = {});

TipPosition predict_position(const TrainedModel& model, const Tensor<float>& raw_frame);

struct AxisStats {
  double mean_mm = 0.0;
  double std_mm = 0.0;
};

struct Metrics {
  AxisStats x;
  AxisStats y;
  AxisStats z;
  AxisStats l2;
  std::size_t n_test = 0;
};

/// Per axis: mean and population std of |error|; l2: mean and population std
/// of the Euclidean error. Inputs in cm, outputs in mm.
Metrics compute_metrics(std::span<const TipPosition> predicted, std::span<const TipPosition> truth);

using Predictor = std::function<TipPosition(const SampleRecord&)>;

Metrics evaluate(const Predictor& predictor, std::span<const SampleRecord> test_set);

/// Rejects a test set whose normalization differs from the model's.
Metrics evaluate(const TrainedModel& model, std::span<const SampleRecord> test_set,
                 const NormalizationConfig& dataset_normalization);

nlohmann::json metrics_to_json(const Metrics& metrics, const std::string& config_digest);
/// Plain-text table laid out like the published accuracy table.
std::string metrics_table(const Metrics& metrics);

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
};

inline constexpr double kReferenceLatencyMs = 20.0;

struct BenchmarkReport {
  std::size_t input_side = 0;
  std::size_t n_runs = 0;
  std::size_t warmup = 0;
  LatencyStats preprocess;  // normalize_image alone
  LatencyStats inference;   // eval-mode forward alone
  LatencyStats total;       // both, per frame
  double reference_ms = kReferenceLatencyMs;
};

LatencyStats latency_stats(std::vector<double> samples_ms);

/// Times preprocessing and eval-mode forward on a rendered frame. Warm-up
/// runs are excluded from the statistics. Requires n_runs >= 10.
BenchmarkReport benchmark_inference(const TrainedModel& model, const OpticsConfig& optics,
                                    std::size_t n_runs = 100, std::size_t warmup = 5);

nlohmann::json benchmark_to_json(std::span<const BenchmarkReport> reports);

/// Weights go to `path` (NTWT); network/normalization settings to
/// `path` + ".json".
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

void write_loss_csv(const std::filesystem::path& path, std::span<const double> history);

}  // namespace needletrack

#include "needletrack/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "needletrack/errors.hpp"
#include "needletrack/json_io.hpp"
#include "needletrack/tensor_io.hpp"

namespace needletrack {
namespace {

constexpr double kMmPerCm = 10.0;

AxisStats mean_and_population_std(std::span<const double> values) {
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

void scale(ParameterSet<float>& grads, float factor) {
  for (auto& [name, g] : grads) {
    for (auto& v : g.data()) v *= factor;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("train.split_ratio must be in (0, 1), got " + std::to_string(split_ratio));
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!checkpoint_path.empty() && checkpoint_every < 1) {
    throw ConfigError("train.checkpoint_every must be >= 1 when a checkpoint path is set");
  }
  optimizer.validate();
}

SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed) {
  if (n == 0) throw DataError("cannot split an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split ratio must be in (0, 1), got " + std::to_string(ratio));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return split;
}

DatasetSplit split_dataset(std::span<const SampleRecord> dataset, double ratio, std::uint64_t seed) {
  const SplitIndices idx = split_indices(dataset.size(), ratio, seed);
  DatasetSplit split;
  for (auto i : idx.train) split.train.push_back(dataset[i]);
  for (auto i : idx.test) split.test.push_back(dataset[i]);
  return split;
}

Tensor<float> prepare_input(const Tensor<float>& raw, const NetworkConfig& network,
                            double max_count) {
  Tensor<float> input = normalize_image(raw, max_count, network.input_channels);
  if (input.shape() != network.input_shape()) {
    throw DataError("frame of shape " + to_string(raw.shape()) + " does not fit a network input " +
                    to_string(network.input_shape()));
  }
  return input;
}

TrainResult train(std::span<const SampleRecord> train_set, const TrainConfig& config,
                  const NetworkConfig& network, const NormalizationConfig& normalization,
                  double max_count, const EpochCallback& on_epoch) {
  config.validate();
  network.validate();
  normalization.validate();
  if (network.output_dim != 3) throw ConfigError("network.output_dim must be 3 for (x, y, z)");
  if (train_set.empty()) throw DataError("training set is empty");

  TrainResult result;
  std::vector<Tensor<float>> inputs;
  std::vector<Tensor<float>> targets;
  inputs.reserve(train_set.size());
  targets.reserve(train_set.size());
  for (const auto& rec : train_set) {
    inputs.push_back(prepare_input(rec.image, network, max_count));
    const NormalizeResult target = normalize_position(rec.ground_truth, normalization);
    if (target.out_of_range) ++result.label_range_violations;
    targets.emplace_back(Shape{3}, std::vector<float>(target.value.begin(), target.value.end()));
  }

  result.model = {network, normalization, max_count,
                  build_network<float>(network, derive_seed(config.seed, "init"))};
  ParameterSet<float>& params = result.model.params;
  ParameterSet<float> grads = params.zeros_like();
  OptimizerState<float> state = OptimizerState<float>::fresh(params);
  Rng dropout_rng = make_rng(config.seed, "dropout");

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Per-sample losses summed in dataset order, so the epoch mean does not
  // depend on the shuffle.
  std::vector<double> sample_loss(n);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(config.seed, "shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t k = order[i];
        auto fwd = forward(network, params, inputs[k], Mode::train, dropout_rng);
        auto loss = mse_loss(fwd.prediction, targets[k]);
        batch_loss += loss.loss;
        sample_loss[k] = loss.loss;
        backward_into(fwd.trace, loss.grad, grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
      }
      scale(grads, 1.0f / static_cast<float>(end - begin));
      adamw_step(params, grads, state, config.optimizer);
    }
    const double epoch_loss = std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0);
    result.loss_history.push_back(epoch_loss / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, result.loss_history.back());
    if (!config.checkpoint_path.empty() &&
        (epoch % config.checkpoint_every == 0 || epoch == config.epochs)) {
      save_model(config.checkpoint_path, result.model);
    }
  }
  return result;
}

TipPosition predict_position(const TrainedModel& model, const Tensor<float>& raw_frame) {
  const Tensor<float> input = prepare_input(raw_frame, model.network, model.input_max_count);
  const Tensor<float> out = predict(model.network, model.params, input);
  return denormalize_position({out[0], out[1], out[2]}, model.normalization);
}

Metrics compute_metrics(std::span<const TipPosition> predicted, std::span<const TipPosition> truth) {
  if (predicted.size() != truth.size()) {
    throw DataError("metrics: " + std::to_string(predicted.size()) + " predictions for " +
                    std::to_string(truth.size()) + " ground-truth positions");
  }
  if (truth.empty()) throw DataError("metrics: test set is empty");
  const std::size_t n = truth.size();
  std::vector<double> ex(n), ey(n), ez(n), el2(n);
  for (std::size_t i = 0; i < n; ++i) {
    // cm -> mm for reporting
    const double dx = (predicted[i].x - truth[i].x) * kMmPerCm;
    const double dy = (predicted[i].y - truth[i].y) * kMmPerCm;
    const double dz = (predicted[i].z - truth[i].z) * kMmPerCm;
    ex[i] = std::abs(dx);
    ey[i] = std::abs(dy);
    ez[i] = std::abs(dz);
    el2[i] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  Metrics m;
  m.x = mean_and_population_std(ex);
  m.y = mean_and_population_std(ey);
  m.z = mean_and_population_std(ez);
  m.l2 = mean_and_population_std(el2);
  m.n_test = n;
  return m;
}

Metrics evaluate(const Predictor& predictor, std::span<const SampleRecord> test_set) {
  std::vector<TipPosition> predicted, truth;
  predicted.reserve(test_set.size());
  truth.reserve(test_set.size());
  for (const auto& rec : test_set) {
    predicted.push_back(predictor(rec));
    truth.push_back(rec.ground_truth);
  }
  return compute_metrics(predicted, truth);
}

Metrics evaluate(const TrainedModel& model, std::span<const SampleRecord> test_set,
                 const NormalizationConfig& dataset_normalization) {
  if (!(model.normalization == dataset_normalization)) {
    throw DataError("model was trained with normalization " +
                    to_json_value(model.normalization).dump() + " but the test set uses " +
                    to_json_value(dataset_normalization).dump());
  }
  return evaluate([&](const SampleRecord& rec) { return predict_position(model, rec.image); },
                  test_set);
}

nlohmann::json metrics_to_json(const Metrics& m, const std::string& config_digest) {
  auto stats = [](const AxisStats& s) { return json{{"mean_mm", s.mean_mm}, {"std_mm", s.std_mm}}; };
  return json{{"per_axis", {{"x", stats(m.x)}, {"y", stats(m.y)}, {"z", stats(m.z)}}},
              {"l2", stats(m.l2)},
              {"n_test", m.n_test},
              {"config_digest", config_digest}};
}

std::string metrics_table(const Metrics& m) {
  auto row = [](const char* label, const AxisStats& s) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "| %-8s | %11.4f \xC2\xB1 %-11.4f |\n", label, s.mean_mm, s.std_mm);
    return std::string(buf);
  };
  std::string out;
  out += "|          | Accuracy & Std. Dev. (mm) |\n";
  out += "|----------|---------------------------|\n";
  out += row("x", m.x);
  out += row("y", m.y);
  out += row("z", m.z);
  out += row("L2-Norm", m.l2);
  out += "n_test = " + std::to_string(m.n_test) + "\n";
  return out;
}

LatencyStats latency_stats(std::vector<double> samples) {
  if (samples.empty()) return {};
  std::sort(samples.begin(), samples.end());
  auto nearest_rank = [&](double p) {
    const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size())));
    return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
  };
  const double sum = std::accumulate(samples.begin(), samples.end(), 0.0);
  return {sum / static_cast<double>(samples.size()), nearest_rank(0.5), nearest_rank(0.95)};
}

BenchmarkReport benchmark_inference(const TrainedModel& model, const OpticsConfig& optics,
                                    std::size_t n_runs, std::size_t warmup) {
  if (n_runs < 10) throw ConfigError("bench.n_runs must be >= 10");
  if (optics.image_side != model.network.input_side) {
    throw ConfigError("bench: optics.image_side " + std::to_string(optics.image_side) +
                      " differs from network.input_side " +
                      std::to_string(model.network.input_side));
  }
  const TipPosition tip = model.normalization.midpoint();
  const Tensor<float> frame = render_scatter_image(tip, optics);

  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
  std::vector<double> pre, infer, total;
  float sink = 0.0f;
  for (std::size_t run = 0; run < warmup + n_runs; ++run) {
    const auto t0 = clock::now();
    const Tensor<float> input = prepare_input(frame, model.network, model.input_max_count);
    const auto t1 = clock::now();
    const Tensor<float> out = predict(model.network, model.params, input);
    const auto t2 = clock::now();
    sink += out[0];
    if (run < warmup) continue;
    pre.push_back(ms(t1 - t0));
    infer.push_back(ms(t2 - t1));
    total.push_back(ms(t2 - t0));
  }
  if (!std::isfinite(sink)) throw std::runtime_error("bench: network produced a non-finite output");

  BenchmarkReport report;
  report.input_side = model.network.input_side;
  report.n_runs = n_runs;
  report.warmup = warmup;
  report.preprocess = latency_stats(std::move(pre));
  report.inference = latency_stats(std::move(infer));
  report.total = latency_stats(std::move(total));
  return report;
}

nlohmann::json benchmark_to_json(std::span<const BenchmarkReport> reports) {
  auto stats = [](const LatencyStats& s) {
    return json{{"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms}};
  };
  json runs = json::array();
  for (const auto& r : reports) {
    runs.push_back({{"input_side", r.input_side},
                    {"n_runs", r.n_runs},
                    {"warmup", r.warmup},
                    {"preprocess", stats(r.preprocess)},
                    {"inference", stats(r.inference)},
                    {"total", stats(r.total)},
                    {"within_reference", r.total.mean_ms < r.reference_ms}});
  }
  return json{{"reference_ms", kReferenceLatencyMs},
              {"reference_note", "published real-time figure: 20 ms processing time per frame"},
              {"runs", std::move(runs)}};
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  write_tensor_file(path, model.params);
  const json card = {{"format", "needletrack-model"},
                     {"version", 1},
                     {"network", to_json_value(model.network)},
                     {"normalization", to_json_value(model.normalization)},
                     {"input_max_count", model.input_max_count}};
  std::filesystem::path card_path = path;
  card_path += ".json";
  std::ofstream out(card_path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + card_path.string() + "'");
  out << card.dump(2) << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::filesystem::path card_path = path;
  card_path += ".json";
  std::ifstream in(card_path);
  if (!in) throw DataError("cannot open model card '" + card_path.string() + "'");
  TrainedModel model;
  try {
    const json card = json::parse(in);
    if (card.value("format", "") != "needletrack-model" || card.value("version", 0) != 1) {
      throw DataError("'" + card_path.string() + "' is not a version-1 model card");
    }
    model.network = from_json_strict<NetworkConfig>(card.at("network"));
    model.normalization = from_json_strict<NormalizationConfig>(card.at("normalization"));
    model.input_max_count = card.at("input_max_count").get<double>();
  } catch (const json::exception& e) {
    throw DataError("malformed model card '" + card_path.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("model card '" + card_path.string() + "': " + e.what());
  }
  model.network.validate();
  model.params = read_tensor_file(path);
  check_parameters(model.network, model.params);
  return model;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write loss history '" + path.string() + "'");
  out << "epoch,train_mse\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g\n", i + 1, history[i]);
    out << buf;
  }
}

}  // namespace needletrack

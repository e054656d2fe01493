#include "needletrack/experiment.hpp"

#include <cstdio>
#include <fstream>

namespace needletrack {

void ExperimentConfig::validate() const {
  optics.validate();
  normalization.validate();
  network.validate();
  train.validate();
  optimizer.validate();
  if (dataset.n < 1) throw ConfigError("dataset.n must be >= 1");
  if (normalization.z.min < 0.0) throw ConfigError("normalization.z.min must be >= 0 (depth)");
  if (optics.image_side != network.input_side) {
    throw ConfigError("optics.image_side (" + std::to_string(optics.image_side) +
                      ") must equal network.input_side (" + std::to_string(network.input_side) + ")");
  }
  if (bench.n_runs < 10) throw ConfigError("bench.n_runs must be >= 10");
  for (auto side : bench.sides) {
    if (side < 8 || side % 8 != 0) {
      throw ConfigError("bench.sides entries must be positive multiples of 8, got " +
                        std::to_string(side));
    }
  }
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig out = train;
  out.seed = seed;
  out.optimizer = optimizer;
  return out;
}

json ExperimentConfig::to_json() const { return to_json_value(*this); }

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  return from_json_strict<ExperimentConfig>(doc);
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config file '" + path.string() + "': " + e.what());
  }
  return from_json(doc);
}

void ExperimentConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));

  json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = raw;

  json doc = to_json();
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
  *this = from_json(doc);
}

std::string ExperimentConfig::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace needletrack

#pragma once

// Strict JSON mapping for the configuration structs. Each struct lists its
// fields once through a visit_fields() overload; to_json_value() and
// overlay_json() are derived from that list. Overlaying rejects unknown keys
// and type mismatches, naming the offending dotted path.

#include <concepts>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "needletrack/errors.hpp"
#include "needletrack/model.hpp"
#include "needletrack/optim.hpp"
#include "needletrack/preprocess.hpp"
#include "needletrack/simulate.hpp"

namespace needletrack {

using json = nlohmann::json;

template <typename F>
void visit_fields(AxisRange& r, F&& f) {
  f("min", r.min);
  f("max", r.max);
}

template <typename F>
void visit_fields(NormalizationConfig& c, F&& f) {
  f("x", c.x);
  f("y", c.y);
  f("z", c.z);
}

template <typename F>
void visit_fields(NetworkConfig& c, F&& f) {
  f("input_channels", c.input_channels);
  f("input_side", c.input_side);
  f("conv1_out", c.conv1_out);
  f("conv2_out", c.conv2_out);
  f("hidden", c.hidden);
  f("output_dim", c.output_dim);
  f("dropout_rate", c.dropout_rate);
}

template <typename F>
void visit_fields(AdamWConfig& c, F&& f) {
  f("lr", c.lr);
  f("beta1", c.beta1);
  f("beta2", c.beta2);
  f("epsilon", c.epsilon);
  f("weight_decay", c.weight_decay);
  f("decay_exclude", c.decay_exclude);
}

// The noise seed is not part of the document: datasets derive it from the
// experiment seed.
template <typename F>
void visit_fields(OpticsConfig& c, F&& f) {
  f("camera_height", c.camera_height);
  f("image_side", c.image_side);
  f("field_of_view", c.field_of_view);
  f("source_power", c.source_power);
  f("background_level", c.background_level);
  f("gaussian_noise_sigma", c.gaussian_noise_sigma);
  f("poisson_noise", c.poisson_noise);
  f("max_count", c.max_count);
}

template <typename T>
concept JsonRecord = requires(T& t) { visit_fields(t, [](const char*, auto&) {}); };

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

// nlohmann stores literals written in C++ as signed even when non-negative.
inline bool is_non_negative_integer(const json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

template <typename T>
json to_json_value(const T& value) {
  if constexpr (JsonRecord<T>) {
    json j = json::object();
    T copy = value;
    visit_fields(copy, [&](const char* key, auto& member) { j[key] = to_json_value(member); });
    return j;
  } else {
    return json(value);
  }
}

template <typename T>
void overlay_json(const json& j, T& value, const std::string& path) {
  auto mismatch = [&](const char* expected) {
    return ConfigError("config key '" + path + "' must be " + expected + ", got " + j.dump());
  };
  if constexpr (JsonRecord<T>) {
    if (!j.is_object()) throw mismatch("an object");
    std::set<std::string> known;
    visit_fields(value, [&](const char* key, auto& member) {
      known.insert(key);
      if (auto it = j.find(key); it != j.end()) overlay_json(*it, member, join_path(path, key));
    });
    for (const auto& item : j.items()) {
      if (!known.contains(item.key())) {
        throw ConfigError("unknown config key '" + join_path(path, item.key()) + "'");
      }
    }
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw mismatch("a boolean");
    value = j.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw mismatch("an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!is_non_negative_integer(j)) throw mismatch("a non-negative integer");
    }
    value = j.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) throw mismatch("a number");
    value = j.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw mismatch("a string");
    value = j.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    if (!j.is_array()) throw mismatch("an array of strings");
    T out;
    for (const auto& e : j) {
      if (!e.is_string()) throw mismatch("an array of strings");
      out.push_back(e.get<std::string>());
    }
    value = std::move(out);
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    if (!j.is_array()) throw mismatch("an array of non-negative integers");
    T out;
    for (const auto& e : j) {
      if (!is_non_negative_integer(e)) throw mismatch("an array of non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    value = std::move(out);
  } else {
    static_assert(sizeof(T) == 0, "no JSON mapping for this field type");
  }
}

template <JsonRecord T>
T from_json_strict(const json& j, T defaults = {}) {
  overlay_json(j, defaults, "");
  return defaults;
}

}  // namespace needletrack

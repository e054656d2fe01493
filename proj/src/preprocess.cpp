#include "needletrack/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "needletrack/errors.hpp"

namespace needletrack {
namespace {

void validate_axis(const AxisRange& r, const char* name) {
  if (!(std::isfinite(r.min) && std::isfinite(r.max) && r.max > r.min)) {
    throw ConfigError(std::string("normalization.") + name + ": max must exceed min (got [" +
                      std::to_string(r.min) + ", " + std::to_string(r.max) + "])");
  }
}

// Written so that min and max land on exactly -1 and +1.
double to_unit(double v, const AxisRange& r) { return 2.0 * (v - r.min) / (r.max - r.min) - 1.0; }

double from_unit(double n, const AxisRange& r) { return r.min + (n + 1.0) * (r.max - r.min) / 2.0; }

}  // namespace

void NormalizationConfig::validate() const {
  validate_axis(x, "x");
  validate_axis(y, "y");
  validate_axis(z, "z");
}

NormalizeResult normalize_position(const TipPosition& p, const NormalizationConfig& cfg) {
  NormalizeResult r;
  r.value = {to_unit(p.x, cfg.x), to_unit(p.y, cfg.y), to_unit(p.z, cfg.z)};
  r.out_of_range = !(cfg.x.contains(p.x) && cfg.y.contains(p.y) && cfg.z.contains(p.z));
  return r;
}

TipPosition denormalize_position(const NormalizedPosition& n, const NormalizationConfig& cfg) {
  return {from_unit(n[0], cfg.x), from_unit(n[1], cfg.y), from_unit(n[2], cfg.z)};
}

Tensor<float> normalize_image(const Tensor<float>& raw, double max_count, std::size_t channels) {
  if (!(max_count > 0.0)) throw ConfigError("max_count must be positive");
  if (channels == 0) throw ConfigError("channel count must be positive");

  std::size_t src_channels = 0, h = 0, w = 0;
  if (raw.rank() == 2) {
    src_channels = 1;
    h = raw.dim(0);
    w = raw.dim(1);
  } else if (raw.rank() == 3) {
    src_channels = raw.dim(0);
    h = raw.dim(1);
    w = raw.dim(2);
  } else {
    throw ShapeError("normalize_image expects (H,W) or (C,H,W), got " + to_string(raw.shape()));
  }
  if (src_channels != 1 && src_channels != channels) {
    throw ShapeError("normalize_image: cannot map " + std::to_string(src_channels) +
                     " source channels onto " + std::to_string(channels));
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = raw[i];
    if (!(v >= 0.0f)) {
      throw DataError("normalize_image: pixel " + std::to_string(i) + " is negative (" +
                      std::to_string(v) + ")");
    }
    if (v > max_count) {
      throw DataError("normalize_image: pixel " + std::to_string(i) + " exceeds max_count " +
                      std::to_string(max_count));
    }
  }

  const std::size_t plane = h * w;
  Tensor<float> out({channels, h, w});
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t src = src_channels == 1 ? 0 : c;
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = static_cast<float>(raw[src * plane + i] / max_count);
  }
  return out;
}

}  // namespace needletrack

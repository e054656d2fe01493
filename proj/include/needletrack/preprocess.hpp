#pragma once

#include <array>

#include "needletrack/tensor.hpp"

namespace needletrack {

/// Physical tip position in centimeters. x and y are lateral; z is depth
/// below the surface. Reports convert to millimeters at output time.
struct TipPosition {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const TipPosition&, const TipPosition&) = default;
};

using NormalizedPosition = std::array<double, 3>;

struct AxisRange {
  double min = 0.0;
  double max = 1.0;

  double span() const { return max - min; }
  double midpoint() const { return min + span() / 2.0; }
  bool contains(double v) const { return v >= min && v <= max; }

  friend bool operator==(const AxisRange&, const AxisRange&) = default;
};

/// Per-axis physical range (cm) mapped onto [-1, 1].
struct NormalizationConfig {
  AxisRange x{-8.3, 8.3};
  AxisRange y{-5.5, 5.5};
  AxisRange z{0.0, 6.5};

  void validate() const;
  const AxisRange& axis(int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  TipPosition midpoint() const { return {x.midpoint(), y.midpoint(), z.midpoint()}; }

  friend bool operator==(const NormalizationConfig&, const NormalizationConfig&) = default;
};

struct NormalizeResult {
  NormalizedPosition value{};
  /// Set when any coordinate fell outside its data range. Values are
  /// extrapolated linearly, never clamped.
  bool out_of_range = false;
};

NormalizeResult normalize_position(const TipPosition& p, const NormalizationConfig& cfg);
TipPosition denormalize_position(const NormalizedPosition& n, const NormalizationConfig& cfg);

/// Scales raw pixel counts into [0, 1]. A (H,W) or (1,H,W) image is
/// replicated into `channels` identical planes; a (C,H,W) image with
/// C == channels is scaled as is.
Tensor<float> normalize_image(const Tensor<float>& raw, double max_count = 255.0,
                              std::size_t channels = 3);

}  // namespace needletrack

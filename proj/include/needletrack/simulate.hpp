#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "needletrack/preprocess.hpp"
#include "needletrack/rng.hpp"
#include "needletrack/tensor.hpp"

namespace needletrack {

/// Scene for the synthetic scattering camera. Lengths in cm, intensities in
/// pixel counts. The camera is orthographic, so `camera_height` only has to
/// be positive; it is carried for the record.
struct OpticsConfig {
  double camera_height = 6.0;
  std::size_t image_side = 400;
  double field_of_view = 16.6;
  /// Irradiance scale: the on-axis signal at depth z is source_power / z^2.
  double source_power = 300.0;
  /// Constant pedestal added to every pixel. It carries no shot noise.
  double background_level = 5.0;
  double gaussian_noise_sigma = 2.0;
  bool poisson_noise = true;
  double max_count = 255.0;
  std::uint64_t seed = 0;

  static OpticsConfig desk_scale() {
    OpticsConfig cfg;
    cfg.image_side = 64;
    return cfg;
  }

  double pixel_size() const { return field_of_view / static_cast<double>(image_side); }
  /// Surface coordinate (cm) of the centre of pixel column/row `index`.
  double pixel_center(std::size_t index) const {
    return (static_cast<double>(index) + 0.5) * pixel_size() - field_of_view / 2.0;
  }
  void validate() const;

  friend bool operator==(const OpticsConfig&, const OpticsConfig&) = default;
};

/// Surface irradiance of a point source at depth z, seen at lateral
/// distance rho: power * z / (rho^2 + z^2)^(3/2).
double surface_irradiance(double rho, double depth, double power);

/// Noise-free source signal per pixel, shape (side, side), row index along y
/// and column index along x. No background, no clipping. Depths shallower
/// than one pixel are evaluated at one pixel's size.
Tensor<float> render_irradiance(const TipPosition& tip, const OpticsConfig& cfg);

/// Camera frame in pixel counts: background + signal (Poisson shot noise on
/// the signal when enabled) + Gaussian read noise, clipped to [0, max_count].
Tensor<float> render_scatter_image(const TipPosition& tip, const OpticsConfig& cfg, Rng& noise);

/// As above, drawing noise from `cfg.seed`.
Tensor<float> render_scatter_image(const TipPosition& tip, const OpticsConfig& cfg);

struct SampleRecord {
  std::size_t id = 0;
  Tensor<float> image;
  TipPosition ground_truth;
};

/// Tips drawn uniformly inside `ranges`. Record i uses its own stream
/// derived from (seed, i), so the result does not depend on generation order.
std::vector<SampleRecord> generate_dataset(std::size_t n, const OpticsConfig& cfg,
                                           const NormalizationConfig& ranges, std::uint64_t seed);

}  // namespace needletrack

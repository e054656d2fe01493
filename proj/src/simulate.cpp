#include "needletrack/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "needletrack/errors.hpp"

namespace needletrack {

void OpticsConfig::validate() const {
  if (!(camera_height > 0.0)) throw ConfigError("optics.camera_height must be > 0");
  if (image_side < 8) throw ConfigError("optics.image_side must be >= 8");
  if (!(field_of_view > 0.0)) throw ConfigError("optics.field_of_view must be > 0");
  if (!(source_power >= 0.0)) throw ConfigError("optics.source_power must be >= 0");
  if (!(background_level >= 0.0)) throw ConfigError("optics.background_level must be >= 0");
  if (!(gaussian_noise_sigma >= 0.0)) throw ConfigError("optics.gaussian_noise_sigma must be >= 0");
  if (!(max_count > 0.0) || max_count > 65535.0) {
    throw ConfigError("optics.max_count must be in (0, 65535]");
  }
}

double surface_irradiance(double rho, double depth, double power) {
  const double r2 = rho * rho + depth * depth;
  return power * depth / (r2 * std::sqrt(r2));
}

Tensor<float> render_irradiance(const TipPosition& tip, const OpticsConfig& cfg) {
  cfg.validate();
  if (!(tip.z >= 0.0)) {
    throw DataError("tip depth must be >= 0 (z is depth below the surface), got " +
                    std::to_string(tip.z));
  }
  const double depth = std::max(tip.z, cfg.pixel_size());
  const std::size_t side = cfg.image_side;
  Tensor<float> image({side, side});
  for (std::size_t r = 0; r < side; ++r) {
    const double dy = cfg.pixel_center(r) - tip.y;
    for (std::size_t c = 0; c < side; ++c) {
      const double dx = cfg.pixel_center(c) - tip.x;
      image[r * side + c] =
          static_cast<float>(surface_irradiance(std::hypot(dx, dy), depth, cfg.source_power));
    }
  }
  return image;
}

Tensor<float> render_scatter_image(const TipPosition& tip, const OpticsConfig& cfg, Rng& noise) {
  Tensor<float> image = render_irradiance(tip, cfg);
  std::normal_distribution<double> read_noise(0.0, 1.0);
  for (auto& px : image.data()) {
    double signal = px;
    if (cfg.poisson_noise && signal > 0.0) {
      signal = static_cast<double>(std::poisson_distribution<long long>(signal)(noise));
    }
    double value = cfg.background_level + signal;
    if (cfg.gaussian_noise_sigma > 0.0) value += cfg.gaussian_noise_sigma * read_noise(noise);
    px = static_cast<float>(std::clamp(value, 0.0, cfg.max_count));
  }
  return image;
}

Tensor<float> render_scatter_image(const TipPosition& tip, const OpticsConfig& cfg) {
  Rng noise(cfg.seed);
  return render_scatter_image(tip, cfg, noise);
}

std::vector<SampleRecord> generate_dataset(std::size_t n, const OpticsConfig& cfg,
                                           const NormalizationConfig& ranges, std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset.n must be >= 1");
  cfg.validate();
  ranges.validate();
  if (ranges.z.min < 0.0) throw ConfigError("normalization.z.min must be >= 0 (depth)");

  std::vector<SampleRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, "record", i);
    std::uniform_real_distribution<double> ux(ranges.x.min, ranges.x.max);
    std::uniform_real_distribution<double> uy(ranges.y.min, ranges.y.max);
    std::uniform_real_distribution<double> uz(ranges.z.min, ranges.z.max);
    SampleRecord& rec = records[i];
    rec.id = i;
    rec.ground_truth.x = ux(rng);
    rec.ground_truth.y = uy(rng);
    rec.ground_truth.z = uz(rng);
    rec.image = render_scatter_image(rec.ground_truth, cfg, rng);
  }
  return records;
}

}  // namespace needletrack

#pragma once

#include <filesystem>
#include <vector>

#include "needletrack/preprocess.hpp"
#include "needletrack/simulate.hpp"

namespace needletrack {

inline constexpr int kManifestVersion = 1;

struct Dataset {
  OpticsConfig optics;
  NormalizationConfig normalization;
  std::vector<SampleRecord> records;
};

struct DatasetWriteOptions {
  /// Also write each frame as a lossless f32 NTWT file next to its PNG.
  bool raw_sidecar = false;
};

/// Layout: <dir>/manifest.json and <dir>/images/NNNNNN.png (+ .f32). The
/// manifest lists version, count, optics, normalization and per-record
/// {image, raw?, x, y, z} with coordinates in cm.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                   const DatasetWriteOptions& options = {});

/// Loads images from the raw sidecar when the manifest names one, else from
/// the PNG. Throws DataError naming the offending path or record.
Dataset read_dataset(const std::filesystem::path& dir);

/// Loads a single frame: NTWT sidecar (tensor "image") or PNG by extension.
Tensor<float> read_frame(const std::filesystem::path& path);

}  // namespace needletrack

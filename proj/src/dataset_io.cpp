#include "needletrack/dataset_io.hpp"

#include <cstdio>
#include <fstream>

#include "needletrack/image_io.hpp"
#include "needletrack/json_io.hpp"
#include "needletrack/tensor_io.hpp"

namespace needletrack {
namespace fs = std::filesystem;

namespace {

std::string frame_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06zu", index);
  return buf;
}

double require_number(const json& rec, const char* key, std::size_t index) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_number()) {
    throw DataError("manifest record " + std::to_string(index) + ": missing numeric '" + key + "'");
  }
  return it->get<double>();
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& dataset,
                   const DatasetWriteOptions& options) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw DataError("cannot create dataset directory '" + dir.string() + "': " + ec.message());

  const int bit_depth = dataset.optics.max_count <= 255.0 ? 8 : 16;
  json records = json::array();
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& rec = dataset.records[i];
    const std::string stem = frame_stem(i);
    json entry = {{"image", stem + ".png"},
                  {"x", rec.ground_truth.x},
                  {"y", rec.ground_truth.y},
                  {"z", rec.ground_truth.z}};
    write_png(dir / (stem + ".png"), rec.image, bit_depth);
    if (options.raw_sidecar) {
      ParameterSet<float> frame;
      frame.insert("image", rec.image);
      write_tensor_file(dir / (stem + ".f32"), frame);
      entry["raw"] = stem + ".f32";
    }
    records.push_back(std::move(entry));
  }

  json manifest = {{"version", kManifestVersion},
                   {"count", dataset.records.size()},
                   {"optics", to_json_value(dataset.optics)},
                   {"normalization", to_json_value(dataset.normalization)},
                   {"records", std::move(records)}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write '" + (dir / "manifest.json").string() + "'");
  out << manifest.dump(2) << '\n';
}

Tensor<float> read_frame(const fs::path& path) {
  if (path.extension() == ".f32") {
    auto tensors = read_tensor_file(path);
    if (!tensors.contains("image")) {
      throw DataError("'" + path.string() + "' holds no tensor named 'image'");
    }
    return tensors.at("image");
  }
  return read_png(path);
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open dataset manifest '" + manifest_path.string() + "'");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }

  try {
    if (!manifest.is_object()) throw DataError("manifest must be a JSON object");
    if (manifest.value("version", -1) != kManifestVersion) {
      throw DataError("unsupported manifest version " + manifest.value("version", json()).dump());
    }
    Dataset ds;
    ds.optics = from_json_strict<OpticsConfig>(manifest.at("optics"));
    ds.normalization = from_json_strict<NormalizationConfig>(manifest.at("normalization"));
    const json& records = manifest.at("records");
    if (!records.is_array()) throw DataError("manifest 'records' must be an array");
    if (manifest.at("count").get<std::size_t>() != records.size()) {
      throw DataError("manifest count " + manifest.at("count").dump() + " disagrees with " +
                      std::to_string(records.size()) + " records");
    }
    ds.records.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const json& r = records[i];
      SampleRecord rec;
      rec.id = i;
      rec.ground_truth = {require_number(r, "x", i), require_number(r, "y", i),
                          require_number(r, "z", i)};
      const std::string file = r.contains("raw") ? r.at("raw").get<std::string>()
                                                 : r.at("image").get<std::string>();
      rec.image = read_frame(dir / file);
      ds.records.push_back(std::move(rec));
    }
    return ds;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("manifest '" + manifest_path.string() + "': " + e.what());
  }
}

}  // namespace needletrack

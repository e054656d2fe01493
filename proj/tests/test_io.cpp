#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "needletrack/dataset_io.hpp"
#include "needletrack/errors.hpp"
#include "needletrack/experiment.hpp"
#include "needletrack/image_io.hpp"
#include "needletrack/tensor_io.hpp"

using namespace needletrack;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("needletrack_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

// Hand-assembled file: one f32 tensor "a" of shape (2) = {1.0, -2.5}.
std::vector<std::uint8_t> handmade_file() {
  std::vector<std::uint8_t> b = {'N', 'T', 'W', 'T', 1};
  put_u16(b, 1);
  b.push_back('a');
  b.push_back(1);  // f32
  b.push_back(1);  // rank
  put_u32(b, 2);
  for (float f : {1.0f, -2.5f}) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(b, bits);
  }
  return b;
}

}  // namespace

// ---- NTWT -----------------------------------------------------------------

TEST(TensorFile, MatchesHandAssembledBytes) {
  ParameterSet<float> set;
  set.insert("a", Tensor<float>({2}, std::vector<float>{1.0f, -2.5f}));
  EXPECT_EQ(encode_tensors(set), handmade_file());
  const auto back = decode_tensors(handmade_file());
  EXPECT_EQ(back, set);
}

TEST(TensorFile, RoundTripBothPrecisions) {
  ParameterSet<float> f;
  f.insert("conv1.weight", Tensor<float>({2, 1, 3, 3}, 0.25f));
  f.insert("b", Tensor<float>({1}, -1.0f));
  EXPECT_EQ(decode_tensors(encode_tensors(f)), f);

  ParameterSet<double> d;
  d.insert("x", Tensor<double>({3}, std::vector<double>{1e-300, 0.1, -7.0}));
  const auto bytes = encode_tensors(d);
  EXPECT_EQ(bytes[5 + 2 + 1], 2);  // dtype f64
  EXPECT_EQ(decode_tensors_f64(bytes), d);

  const auto dir = scratch_dir("ntwt");
  write_tensor_file(dir / "w.ntwt", f);
  EXPECT_EQ(read_tensor_file(dir / "w.ntwt"), f);
  fs::remove_all(dir);
}

TEST(TensorFile, TensorsAreSortedByName) {
  ParameterSet<float> set;
  set.insert("zeta", Tensor<float>({1}));
  set.insert("alpha", Tensor<float>({1}));
  const auto bytes = encode_tensors(set);
  EXPECT_EQ(std::string(bytes.begin() + 7, bytes.begin() + 12), "alpha");
}

TEST(TensorFile, RejectsCorruptInput) {
  const auto good = handmade_file();

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_tensors(bad_magic), DataError);

  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(decode_tensors(bad_version), DataError);

  auto bad_dtype = good;
  bad_dtype[8] = 9;
  EXPECT_THROW(decode_tensors(bad_dtype), DataError);

  for (std::size_t cut : {3u, 6u, 9u, 12u, 17u}) {
    EXPECT_THROW(decode_tensors({good.begin(), good.begin() + static_cast<long>(cut)}), DataError) << cut;
  }

  auto duplicate = good;
  duplicate.insert(duplicate.end(), good.begin() + 5, good.end());
  EXPECT_THROW(decode_tensors(duplicate), DataError);

  EXPECT_THROW(read_tensor_file("/nonexistent/w.ntwt"), DataError);
}

// ---- PNG ------------------------------------------------------------------

TEST(Png, EightAndSixteenBitRoundTrip) {
  const auto dir = scratch_dir("png");
  Tensor<float> img({5, 7});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>((i * 37) % 256);
  write_png(dir / "a.png", img, 8);
  EXPECT_EQ(read_png(dir / "a.png"), img);

  Tensor<float> deep({4, 4});
  for (std::size_t i = 0; i < deep.size(); ++i) deep[i] = static_cast<float>(i * 4000);
  write_png(dir / "b.png", deep, 16);
  EXPECT_EQ(read_png(dir / "b.png"), deep);

  EXPECT_THROW(write_png(dir / "c.png", img, 12), std::invalid_argument);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_png(dir / "junk.png"), DataError);
  fs::remove_all(dir);
}

// ---- dataset directory ----------------------------------------------------

TEST(DatasetDir, RoundTripPngAndSidecar) {
  const auto dir = scratch_dir("dataset");
  Dataset ds;
  ds.optics = OpticsConfig::desk_scale();
  ds.optics.image_side = 16;
  ds.records = generate_dataset(5, ds.optics, ds.normalization, 3);

  write_dataset(dir / "png", ds);
  const auto png = read_dataset(dir / "png");
  ASSERT_EQ(png.records.size(), 5u);
  EXPECT_EQ(png.optics, ds.optics);
  EXPECT_EQ(png.normalization, ds.normalization);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(png.records[i].ground_truth, ds.records[i].ground_truth);
    for (std::size_t k = 0; k < ds.records[i].image.size(); ++k) {
      EXPECT_NEAR(png.records[i].image[k], ds.records[i].image[k], 0.5);
    }
  }
  EXPECT_TRUE(fs::exists(dir / "png" / "images" / "000004.png"));

  write_dataset(dir / "raw", ds, {.raw_sidecar = true});
  const auto raw = read_dataset(dir / "raw");
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(raw.records[i].image, ds.records[i].image);
  EXPECT_EQ(read_frame(dir / "raw" / "images" / "000002.f32"), ds.records[2].image);
  fs::remove_all(dir);
}

TEST(DatasetDir, SameSeedGivesIdenticalManifest) {
  const auto dir = scratch_dir("manifest");
  Dataset ds;
  ds.optics = OpticsConfig::desk_scale();
  ds.records = generate_dataset(4, ds.optics, ds.normalization, 7);
  write_dataset(dir / "a", ds);
  ds.records = generate_dataset(4, ds.optics, ds.normalization, 7);
  write_dataset(dir / "b", ds);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir / "a" / "manifest.json"), slurp(dir / "b" / "manifest.json"));
  EXPECT_EQ(slurp(dir / "a" / "images" / "000003.png"), slurp(dir / "b" / "images" / "000003.png"));
  fs::remove_all(dir);
}

TEST(DatasetDir, RejectsBrokenManifests) {
  const auto dir = scratch_dir("broken");
  EXPECT_THROW(read_dataset(dir / "missing"), DataError);
  std::ofstream(dir / "manifest.json") << "{\"version\": 1, \"count\": 1}";
  EXPECT_THROW(read_dataset(dir), DataError);
  std::ofstream(dir / "manifest.json") << "{ oops";
  EXPECT_THROW(read_dataset(dir), DataError);
  fs::remove_all(dir);
}

// ---- experiment config ------------------------------------------------------

TEST(Config, JsonRoundTrip) {
  ExperimentConfig cfg;
  cfg.seed = 77;
  cfg.train.epochs = 12;
  cfg.optimizer.decay_exclude = {"fc2.bias"};
  cfg.bench.sides = {64, 128};
  const auto back = ExperimentConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.digest(), cfg.digest());
  ExperimentConfig other = cfg;
  other.train.epochs = 13;
  EXPECT_NE(other.digest(), cfg.digest());
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  auto doc = ExperimentConfig{}.to_json();
  doc["train"]["epoch"] = 5;  // misspelled
  try {
    ExperimentConfig::from_json(doc);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.epoch"), std::string::npos) << e.what();
  }
  doc = ExperimentConfig{}.to_json();
  doc["optics"]["poisson_noise"] = "yes";
  EXPECT_THROW(ExperimentConfig::from_json(doc), ConfigError);
  doc = ExperimentConfig{}.to_json();
  doc["dataset"]["n"] = -4;
  EXPECT_THROW(ExperimentConfig::from_json(doc), ConfigError);
}

TEST(Config, PartialDocumentKeepsDefaults) {
  const auto cfg = ExperimentConfig::from_json(json{{"seed", 3}, {"train", {{"epochs", 7}}}});
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.train.epochs, 7u);
  EXPECT_EQ(cfg.train.batch_size, 16u);
  EXPECT_EQ(cfg.network.input_side, 64u);
}

TEST(Config, DottedOverrides) {
  ExperimentConfig cfg;
  cfg.apply_override("dataset.n=606");
  cfg.apply_override("seed=7");
  cfg.apply_override("paths.weights=out/w.ntwt");
  cfg.apply_override("optimizer.lr=0.0005");
  cfg.apply_override("normalization.x.max=9");
  cfg.apply_override("bench.sides=[64]");
  EXPECT_EQ(cfg.dataset.n, 606u);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.paths.weights, "out/w.ntwt");
  EXPECT_DOUBLE_EQ(cfg.optimizer.lr, 5e-4);
  EXPECT_DOUBLE_EQ(cfg.normalization.x.max, 9.0);
  EXPECT_EQ(cfg.bench.sides, (std::vector<std::size_t>{64}));

  EXPECT_THROW(cfg.apply_override("train.epohcs=3"), ConfigError);
  EXPECT_THROW(cfg.apply_override("no_equals_sign"), ConfigError);
  EXPECT_THROW(cfg.apply_override("train.epochs=many"), ConfigError);
}

TEST(Config, CrossFieldValidation) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.optics.image_side = 128;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.normalization.z.min = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.bench.sides = {60};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, SeedStreamsDiffer) {
  ExperimentConfig cfg;
  EXPECT_NE(cfg.dataset_seed(), cfg.split_seed());
  cfg.seed = 1;
  EXPECT_NE(cfg.dataset_seed(), ExperimentConfig{}.dataset_seed());
}

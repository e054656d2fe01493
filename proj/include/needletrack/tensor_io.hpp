#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "needletrack/model.hpp"
#include "needletrack/tensor.hpp"

namespace needletrack {

// NTWT container, all integers little-endian:
//   "NTWT" | version u8 (=1) | per tensor, in ascending name order:
//   name_len u16 | UTF-8 name | dtype u8 | rank u8 | dims u32 x rank | raw data
// Tensors run until end of file. dtype 1 = f32, 2 = f64.

inline constexpr char kTensorFileMagic[4] = {'N', 'T', 'W', 'T'};
inline constexpr std::uint8_t kTensorFileVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

template <typename T>
std::vector<std::uint8_t> encode_tensors(const ParameterSet<T>& tensors);

/// Decodes into f32 tensors regardless of the stored dtype.
ParameterSet<float> decode_tensors(const std::vector<std::uint8_t>& bytes);
ParameterSet<double> decode_tensors_f64(const std::vector<std::uint8_t>& bytes);

template <typename T>
void write_tensor_file(const std::filesystem::path& path, const ParameterSet<T>& tensors);

ParameterSet<float> read_tensor_file(const std::filesystem::path& path);

}  // namespace needletrack

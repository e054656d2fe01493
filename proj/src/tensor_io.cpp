#include "needletrack/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "needletrack/errors.hpp"

namespace needletrack {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  bool done() const { return pos_ == in_.size(); }
  std::uint64_t uint(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::string string(std::size_t n) {
    need(n, "tensor name");
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw DataError(std::string("tensor file truncated while reading ") + what + " at byte " +
                      std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

template <typename Out>
ParameterSet<Out> decode_as(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (char c : kTensorFileMagic) {
    if (static_cast<char>(r.uint(1, "magic")) != c) throw DataError("not an NTWT tensor file");
  }
  const auto version = r.uint(1, "version");
  if (version != kTensorFileVersion) {
    throw DataError("unsupported NTWT version " + std::to_string(version));
  }
  ParameterSet<Out> out;
  while (!r.done()) {
    const auto name_len = r.uint(2, "name length");
    std::string name = r.string(name_len);
    const auto dtype = static_cast<DType>(r.uint(1, "dtype"));
    if (dtype != DType::f32 && dtype != DType::f64) {
      throw DataError("tensor '" + name + "' has unknown dtype code " +
                      std::to_string(static_cast<int>(dtype)));
    }
    const auto rank = r.uint(1, "rank");
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(r.uint(4, "dimension"));
    std::vector<Out> values(element_count(shape));
    for (auto& v : values) {
      if (dtype == DType::f32) {
        v = static_cast<Out>(std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4, "data"))));
      } else {
        v = static_cast<Out>(std::bit_cast<double>(r.uint(8, "data")));
      }
    }
    if (out.contains(name)) throw DataError("tensor file repeats the name '" + name + "'");
    try {
      out.insert(name, Tensor<Out>(std::move(shape), std::move(values)));
    } catch (const ShapeError& e) {
      throw DataError("tensor '" + name + "': " + e.what());
    }
  }
  return out;
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_tensors(const ParameterSet<T>& tensors) {
  Writer w;
  w.bytes(kTensorFileMagic, sizeof kTensorFileMagic);
  w.u8(kTensorFileVersion);
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw DataError("tensor name too long: " + name.substr(0, 32) + "...");
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(dtype_of<T>()));
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (T v : t.data()) {
      if constexpr (std::is_same_v<T, float>) {
        w.u32(std::bit_cast<std::uint32_t>(v));
      } else {
        w.u64(std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return w.take();
}

ParameterSet<float> decode_tensors(const std::vector<std::uint8_t>& bytes) {
  return decode_as<float>(bytes);
}

ParameterSet<double> decode_tensors_f64(const std::vector<std::uint8_t>& bytes) {
  return decode_as<double>(bytes);
}

template <typename T>
void write_tensor_file(const std::filesystem::path& path, const ParameterSet<T>& tensors) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

ParameterSet<float> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensors(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

template std::vector<std::uint8_t> encode_tensors(const ParameterSet<float>&);
template std::vector<std::uint8_t> encode_tensors(const ParameterSet<double>&);
template void write_tensor_file(const std::filesystem::path&, const ParameterSet<float>&);
template void write_tensor_file(const std::filesystem::path&, const ParameterSet<double>&);

}  // namespace needletrack

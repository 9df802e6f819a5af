#pragma once

// Reader/writer for the safetensors container:
//   [u64 LE header length N][N bytes JSON header][payload]
// Header maps tensor name -> {"dtype", "shape", "data_offsets": [begin, end)}
// with offsets relative to the start of the payload. An optional
// "__metadata__" entry holds string -> string pairs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace tokprune::safetensors {

enum class DType { kF32, kF64 };

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

struct Tensor {
  DType dtype = DType::kF32;
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> bytes;  // row-major, little-endian

  std::size_t numel() const;

  static Tensor from_f32(std::vector<std::size_t> shape, std::span<const float> values);
  static Tensor from_f64(std::vector<std::size_t> shape, std::span<const double> values);

  // Both throw a "shape error" if the dtype does not match.
  std::vector<float> to_f32() const;
  std::vector<double> to_f64() const;
};

struct Archive {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;
};

// Parse errors are reported as "corrupt weights"; a missing file as
// "artifact missing".
Archive parse(std::span<const std::uint8_t> file_bytes);
Archive read_file(const std::filesystem::path& path);

// Tensors are laid out in name order and the header is space-padded to a
// multiple of 8 bytes, so equal archives serialize to equal bytes.
std::vector<std::uint8_t> serialize(const Archive& archive);
void write_file(const std::filesystem::path& path, const Archive& archive);

}  // namespace tokprune::safetensors

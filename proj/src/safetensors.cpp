#include "tokprune/safetensors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <json.hpp>

#include "tokprune/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor archives are read by reinterpreting little-endian payloads");

namespace tokprune::safetensors {

using nlohmann::json;

std::size_t dtype_size(DType dtype) { return dtype == DType::kF32 ? 4 : 8; }

const char* dtype_name(DType dtype) { return dtype == DType::kF32 ? "F32" : "F64"; }

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::from_f32(std::vector<std::size_t> shape, std::span<const float> values) {
  Tensor t;
  t.dtype = DType::kF32;
  t.shape = std::move(shape);
  if (t.numel() != values.size()) fail(ErrorKind::kShapeError, "value count does not match shape");
  t.bytes.resize(values.size_bytes());
  if (!values.empty()) std::memcpy(t.bytes.data(), values.data(), values.size_bytes());
  return t;
}

Tensor Tensor::from_f64(std::vector<std::size_t> shape, std::span<const double> values) {
  Tensor t;
  t.dtype = DType::kF64;
  t.shape = std::move(shape);
  if (t.numel() != values.size()) fail(ErrorKind::kShapeError, "value count does not match shape");
  t.bytes.resize(values.size_bytes());
  if (!values.empty()) std::memcpy(t.bytes.data(), values.data(), values.size_bytes());
  return t;
}

std::vector<float> Tensor::to_f32() const {
  if (dtype != DType::kF32) fail(ErrorKind::kShapeError, "expected F32 tensor");
  std::vector<float> out(numel());
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<double> Tensor::to_f64() const {
  if (dtype != DType::kF64) fail(ErrorKind::kShapeError, "expected F64 tensor");
  std::vector<double> out(numel());
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

namespace {

[[noreturn]] void corrupt(const std::string& what) { fail(ErrorKind::kCorruptWeights, what); }

DType parse_dtype(const std::string& name, const std::string& tensor) {
  if (name == "F32") return DType::kF32;
  if (name == "F64") return DType::kF64;
  corrupt("tensor '" + tensor + "' has unsupported dtype " + name);
}

}  // namespace

Archive parse(std::span<const std::uint8_t> file_bytes) {
  if (file_bytes.size() < 8) corrupt("archive shorter than its length prefix");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, file_bytes.data(), 8);
  if (header_len > file_bytes.size() - 8) corrupt("header length exceeds file size");

  const auto* header_begin = reinterpret_cast<const char*>(file_bytes.data() + 8);
  json header;
  try {
    header = json::parse(header_begin, header_begin + header_len);
  } catch (const json::exception& e) {
    corrupt(std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) corrupt("header is not a JSON object");

  const std::span<const std::uint8_t> payload = file_bytes.subspan(8 + header_len);
  Archive archive;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      if (!entry.is_object()) corrupt("__metadata__ is not an object");
      for (const auto& [k, v] : entry.items()) {
        if (!v.is_string()) corrupt("__metadata__ value for '" + k + "' is not a string");
        archive.metadata[k] = v.get<std::string>();
      }
      continue;
    }
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
        !entry.contains("data_offsets")) {
      corrupt("tensor '" + name + "' is missing dtype, shape or data_offsets");
    }
    const auto& dtype_json = entry.at("dtype");
    const auto& shape_json = entry.at("shape");
    const auto& offsets_json = entry.at("data_offsets");
    if (!dtype_json.is_string() || !shape_json.is_array() || !offsets_json.is_array() ||
        offsets_json.size() != 2) {
      corrupt("tensor '" + name + "' has a malformed header entry");
    }

    Tensor t;
    t.dtype = parse_dtype(dtype_json.get<std::string>(), name);
    for (const auto& d : shape_json) {
      if (!d.is_number_unsigned()) corrupt("tensor '" + name + "' has a non-integer dimension");
      t.shape.push_back(d.get<std::size_t>());
    }
    if (!offsets_json[0].is_number_unsigned() || !offsets_json[1].is_number_unsigned()) {
      corrupt("tensor '" + name + "' has non-integer data offsets");
    }
    const auto begin = offsets_json[0].get<std::uint64_t>();
    const auto end = offsets_json[1].get<std::uint64_t>();
    if (begin > end || end > payload.size()) corrupt("tensor '" + name + "' data lies outside the payload");
    if (end - begin != t.numel() * dtype_size(t.dtype)) {
      corrupt("tensor '" + name + "' byte length does not match its shape");
    }
    t.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(begin),
                   payload.begin() + static_cast<std::ptrdiff_t>(end));
    archive.tensors.emplace(name, std::move(t));
  }
  return archive;
}

Archive read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kArtifactMissing, path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

std::vector<std::uint8_t> serialize(const Archive& archive) {
  json header = json::object();
  if (!archive.metadata.empty()) header["__metadata__"] = archive.metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    if (t.bytes.size() != t.numel() * dtype_size(t.dtype)) {
      fail(ErrorKind::kShapeError, "tensor '" + name + "' byte length does not match its shape");
    }
    header[name] = {{"dtype", dtype_name(t.dtype)},
                    {"shape", t.shape},
                    {"data_offsets", {offset, offset + t.bytes.size()}}};
    offset += t.bytes.size();
  }
  std::string header_text = header.dump();
  header_text.append((8 - header_text.size() % 8) % 8, ' ');

  std::vector<std::uint8_t> out(8 + header_text.size() + offset);
  const std::uint64_t header_len = header_text.size();
  std::memcpy(out.data(), &header_len, 8);
  std::memcpy(out.data() + 8, header_text.data(), header_text.size());
  std::size_t pos = 8 + header_text.size();
  for (const auto& [name, t] : archive.tensors) {
    if (!t.bytes.empty()) std::memcpy(out.data() + pos, t.bytes.data(), t.bytes.size());
    pos += t.bytes.size();
  }
  return out;
}

void write_file(const std::filesystem::path& path, const Archive& archive) {
  const auto bytes = serialize(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIoError, "write failed for " + path.string());
}

}  // namespace tokprune::safetensors

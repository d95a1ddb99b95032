#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spur/common.hpp"

namespace spur {

inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::size_t kProvenanceBytes = 64;

/// "SPURTNSR" | u32 version | u8 dtype (0 = f32) | u8 ndim | u64 dims[ndim] |
/// 64-byte zero-padded provenance | f32 payload, little-endian, row-major.
struct TensorFileHeader {
  std::uint32_t version = kTensorFileVersion;
  std::uint8_t dtype = 0;
  std::vector<std::uint64_t> dims;
  std::string provenance;

  std::uint64_t numel() const;
  /// Offset of the first payload byte.
  std::size_t payload_offset() const;
};

struct TensorFile {
  TensorFileHeader header;
  std::vector<float> data;
};

class TensorFileError : public FormatError {
 public:
  enum class Kind { BadMagic, BadVersion, BadDtype, Truncated, SizeMismatch };
  TensorFileError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Provenance longer than 64 bytes is rejected rather than cut.
std::vector<std::uint8_t> encode_tensor_file(const std::vector<std::uint64_t>& dims,
                                             const std::vector<float>& data, const std::string& provenance);
TensorFile decode_tensor_file(const std::vector<std::uint8_t>& bytes, const std::string& source_name);

void write_tensor_file(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
                       const std::vector<float>& data, const std::string& provenance);
TensorFile read_tensor_file(const std::filesystem::path& path);
/// Reads and validates only the header.
TensorFileHeader read_tensor_header(const std::filesystem::path& path);

}  // namespace spur

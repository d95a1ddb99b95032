#include "spur/tensor_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace spur {
namespace {

constexpr char kMagic[8] = {'S', 'P', 'U', 'R', 'T', 'N', 'S', 'R'};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
  return v;
}

// Parses everything up to the payload; `size` may be just the header prefix.
TensorFileHeader decode_header(const std::uint8_t* bytes, std::size_t size, const std::string& name) {
  using Kind = TensorFileError::Kind;
  // A prefix of the magic (including an empty file) is a truncation, anything else is not ours.
  if (size > 0 && std::memcmp(bytes, kMagic, std::min(size, sizeof kMagic)) != 0)
    throw TensorFileError(Kind::BadMagic, name + ": not a SPURTNSR tensor file");
  if (size < 14) throw TensorFileError(Kind::Truncated, name + ": truncated header");
  TensorFileHeader h;
  h.version = get_le<std::uint32_t>(bytes + 8);
  if (h.version != kTensorFileVersion)
    throw TensorFileError(Kind::BadVersion, name + ": unsupported version " + std::to_string(h.version));
  h.dtype = bytes[12];
  if (h.dtype != 0)
    throw TensorFileError(Kind::BadDtype, name + ": unsupported dtype " + std::to_string(h.dtype));
  const std::size_t ndim = bytes[13];
  if (size < 14 + 8 * ndim + kProvenanceBytes) throw TensorFileError(Kind::Truncated, name + ": truncated header");
  for (std::size_t i = 0; i < ndim; ++i) h.dims.push_back(get_le<std::uint64_t>(bytes + 14 + 8 * i));
  const char* prov = reinterpret_cast<const char*>(bytes + 14 + 8 * ndim);
  h.provenance.assign(prov, strnlen(prov, kProvenanceBytes));
  return h;
}

}  // namespace

std::uint64_t TensorFileHeader::numel() const {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > UINT64_MAX / d) throw FormatError("tensor dims overflow");
    n *= d;
  }
  return n;
}

std::size_t TensorFileHeader::payload_offset() const { return 14 + 8 * dims.size() + kProvenanceBytes; }

std::vector<std::uint8_t> encode_tensor_file(const std::vector<std::uint64_t>& dims,
                                             const std::vector<float>& data, const std::string& provenance) {
  if (dims.size() > 255) throw ValidationError("tensor rank above 255");
  if (provenance.size() > kProvenanceBytes)
    throw ValidationError("provenance string longer than " + std::to_string(kProvenanceBytes) + " bytes");
  TensorFileHeader h;
  h.dims = dims;
  if (h.numel() != data.size())
    throw ValidationError("tensor data holds " + std::to_string(data.size()) + " values but dims imply " +
                          std::to_string(h.numel()));
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof kMagic);
  out.reserve(h.payload_offset() + 4 * data.size());
  put_le<std::uint32_t>(out, kTensorFileVersion);
  put_le<std::uint8_t>(out, 0);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_le<std::uint64_t>(out, d);
  std::uint8_t prov[kProvenanceBytes] = {};
  std::memcpy(prov, provenance.data(), provenance.size());
  out.insert(out.end(), prov, prov + kProvenanceBytes);
  for (float v : data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

TensorFile decode_tensor_file(const std::vector<std::uint8_t>& bytes, const std::string& source_name) {
  TensorFile tf;
  tf.header = decode_header(bytes.data(), bytes.size(), source_name);
  const std::uint64_t n = tf.header.numel();
  const std::size_t off = tf.header.payload_offset();
  const std::size_t have = bytes.size() - off;
  if (n > have / 4 || have != 4 * n)
    throw TensorFileError(TensorFileError::Kind::SizeMismatch,
                          source_name + ": dims imply " + std::to_string(n) + " values but payload has " +
                              std::to_string(have) + " bytes");
  tf.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) tf.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(&bytes[off + 4 * i]));
  return tf;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
                       const std::vector<float>& data, const std::string& provenance) {
  const auto bytes = encode_tensor_file(dims, data, provenance);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensor_file(bytes, path.string());
}

TensorFileHeader read_tensor_header(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> head(14 + 8 * 255 + kProvenanceBytes);
  f.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(f.gcount()));
  TensorFileHeader h = decode_header(head.data(), head.size(), path.string());
  f.clear();
  f.seekg(0, std::ios::end);
  const auto total = static_cast<std::uint64_t>(f.tellg());
  const std::uint64_t n = h.numel();
  if (total < h.payload_offset() || total - h.payload_offset() != 4 * n || n > total / 4)
    throw TensorFileError(TensorFileError::Kind::SizeMismatch,
                          path.string() + ": dims imply " + std::to_string(n) + " values but file has " +
                              std::to_string(total) + " bytes");
  return h;
}

}  // namespace spur

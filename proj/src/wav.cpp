#include "spur/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace spur {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

}  // namespace

WavAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12)
    throw WavError(WavError::Kind::Truncated, name + ": file too short for a RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError(WavError::Kind::NotRiff, name + ": not a RIFF/WAVE file");

  FmtChunk fmt;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || available < 16)
        throw WavError(WavError::Kind::Truncated, name + ": truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      fmt.format = le16(f);
      fmt.channels = le16(f + 2);
      fmt.sample_rate = le32(f + 4);
      fmt.bits = le16(f + 14);
      if (fmt.format == kFormatExtensible) {
        if (size < 40 || available < 40)
          throw WavError(WavError::Kind::Truncated, name + ": truncated extensible fmt chunk");
        fmt.format = le16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (size > available)
        throw WavError(WavError::Kind::Truncated,
                       name + ": data chunk declares " + std::to_string(size) + " bytes, only " +
                           std::to_string(available) + " present");
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw WavError(WavError::Kind::Truncated, name + ": missing fmt chunk");
  if (!data) throw WavError(WavError::Kind::Truncated, name + ": missing data chunk");

  WavAudio audio;
  if (fmt.format == kFormatPcm && fmt.bits == 16) {
    audio.encoding = SampleEncoding::Pcm16;
  } else if (fmt.format == kFormatFloat && fmt.bits == 32) {
    audio.encoding = SampleEncoding::Float32;
  } else {
    throw WavError(WavError::Kind::UnsupportedEncoding,
                   name + ": unsupported encoding (format tag " + std::to_string(fmt.format) +
                       ", " + std::to_string(fmt.bits) + " bits); need PCM16 or float32");
  }
  if (fmt.channels == 0 || fmt.sample_rate == 0)
    throw WavError(WavError::Kind::ChannelCount, name + ": zero channels or sample rate");

  const std::size_t width = fmt.bits / 8;
  const std::size_t frame_bytes = width * fmt.channels;
  if (data_size % frame_bytes != 0)
    throw WavError(WavError::Kind::Truncated, name + ": data ends mid-frame");
  const std::size_t frames = data_size / frame_bytes;
  audio.sample_rate = static_cast<int>(fmt.sample_rate);
  audio.channels.assign(fmt.channels, std::vector<double>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * width;
      double v;
      if (audio.encoding == SampleEncoding::Pcm16) {
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else {
        v = std::bit_cast<float>(le32(p));
      }
      audio.channels[c][i] = v;
    }
  }
  return audio;
}

void write_wav(const std::filesystem::path& path, const std::vector<std::vector<double>>& channels,
               int sample_rate, SampleEncoding encoding) {
  if (channels.empty()) throw ValidationError("cannot write a WAV with no channels");
  const std::size_t frames = channels[0].size();
  for (const auto& c : channels)
    if (c.size() != frames) throw ValidationError("WAV channels must have equal length");

  const std::uint16_t n_ch = static_cast<std::uint16_t>(channels.size());
  const std::uint16_t bits = encoding == SampleEncoding::Pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * n_ch * (bits / 8));

  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, encoding == SampleEncoding::Pcm16 ? kFormatPcm : kFormatFloat);
  put16(out, n_ch);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate) * n_ch * (bits / 8));
  put16(out, static_cast<std::uint16_t>(n_ch * (bits / 8)));
  put16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& c : channels) {
      if (encoding == SampleEncoding::Pcm16) {
        const double scaled = std::clamp(std::round(c[i] * 32768.0), -32768.0, 32767.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
      } else {
        put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(c[i])));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

FoaClip load_foa_wav(const std::filesystem::path& path, ChannelConvention convention) {
  WavAudio audio = read_wav(path);
  if (audio.channels.size() != 4)
    throw WavError(WavError::Kind::ChannelCount,
                   path.string() + ": expected 4 channels, found " +
                       std::to_string(audio.channels.size()));
  FoaChannels rows;
  for (int m = 0; m < 4; ++m) rows[m] = std::move(audio.channels[m]);
  return FoaClip(from_convention(rows, convention), audio.sample_rate);
}

void save_foa_wav(const FoaClip& clip, const std::filesystem::path& path,
                  ChannelConvention convention, SampleEncoding encoding) {
  FoaChannels rows = to_convention(clip.channels(), convention);
  std::vector<std::vector<double>> channels(std::make_move_iterator(rows.begin()),
                                            std::make_move_iterator(rows.end()));
  write_wav(path, channels, clip.sample_rate(), encoding);
}

std::vector<double> load_mono_wav(const std::filesystem::path& path, int* sample_rate) {
  WavAudio audio = read_wav(path);
  if (audio.channels.size() != 1)
    throw WavError(WavError::Kind::ChannelCount,
                   path.string() + ": expected a mono source, found " +
                       std::to_string(audio.channels.size()) + " channels");
  if (sample_rate) *sample_rate = audio.sample_rate;
  return std::move(audio.channels[0]);
}

}  // namespace spur

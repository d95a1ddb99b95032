#pragma once

#include <filesystem>
#include <vector>

#include "spur/common.hpp"
#include "spur/foa.hpp"

namespace spur {

enum class SampleEncoding { Pcm16, Float32 };

/// Raised for malformed or unsupported WAV input; `kind` tells the cases apart.
class WavError : public FormatError {
 public:
  enum class Kind { NotRiff, ChannelCount, UnsupportedEncoding, Truncated };
  WavError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct WavAudio {
  int sample_rate = 0;
  SampleEncoding encoding = SampleEncoding::Float32;
  std::vector<std::vector<double>> channels;  // de-interleaved
};

/// Reads PCM16 or IEEE float32 RIFF/WAVE (plain or WAVE_FORMAT_EXTENSIBLE).
/// PCM16 is scaled by 1/32768.
WavAudio read_wav(const std::filesystem::path& path);

/// Writes little-endian RIFF/WAVE. PCM16 values are round(x*32768) clamped.
void write_wav(const std::filesystem::path& path, const std::vector<std::vector<double>>& channels,
               int sample_rate, SampleEncoding encoding);

/// Loads a 4-channel file recorded in `convention` and canonicalizes it.
FoaClip load_foa_wav(const std::filesystem::path& path, ChannelConvention convention);

void save_foa_wav(const FoaClip& clip, const std::filesystem::path& path,
                  ChannelConvention convention,
                  SampleEncoding encoding = SampleEncoding::Float32);

/// Loads a single-channel file (scene sources).
std::vector<double> load_mono_wav(const std::filesystem::path& path, int* sample_rate);

}  // namespace spur

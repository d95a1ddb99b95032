#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "spur/foa.hpp"

namespace spur {

enum class WindowType { Hann, Rectangular };

WindowType parse_window(std::string_view name);
std::string to_string(WindowType w);

struct StftConfig {
  int n_fft = 512;
  int win_length = 400;  // 25 ms at 16 kHz
  int hop = 160;         // 10 ms at 16 kHz
  WindowType window = WindowType::Hann;

  void validate() const;
  int n_bins() const { return n_fft / 2 + 1; }
};

/// Frames that lie fully inside a signal of n_samples; 0 if shorter than a window.
std::size_t stft_frame_count(std::size_t n_samples, const StftConfig& cfg);

/// Periodic Hann or all-ones window of `length` samples.
std::vector<double> make_window(WindowType type, int length);

/// One-sided STFT of all four channels, laid out [frame][bin][channel].
class StftTensor {
 public:
  StftTensor(std::size_t n_frames, const StftConfig& cfg, int sample_rate);

  std::size_t n_frames() const { return n_frames_; }
  std::size_t n_bins() const { return n_bins_; }
  const StftConfig& config() const { return cfg_; }
  int sample_rate() const { return sample_rate_; }

  std::complex<double>& at(std::size_t n, std::size_t f, std::size_t m) {
    return data_[(n * n_bins_ + f) * 4 + m];
  }
  const std::complex<double>& at(std::size_t n, std::size_t f, std::size_t m) const {
    return data_[(n * n_bins_ + f) * 4 + m];
  }
  /// The four channel coefficients of bin f in frame n.
  const std::complex<double>* bin(std::size_t n, std::size_t f) const {
    return &data_[(n * n_bins_ + f) * 4];
  }

 private:
  std::size_t n_frames_;
  std::size_t n_bins_;
  StftConfig cfg_;
  int sample_rate_;
  std::vector<std::complex<double>> data_;
};

/// frames[n,f,m] = sum_t w(t) x_m(n*hop + t) exp(-i 2 pi f t / n_fft), t < win_length.
/// Throws ValidationError when the clip is shorter than one window.
StftTensor stft(const FoaClip& clip, const StftConfig& cfg);

double hz_to_mel(double hz);  // HTK: 2595 log10(1 + f/700)
double mel_to_hz(double mel);

/// Triangular HTK-mel filters between 0 Hz and Nyquist, each row renormalized
/// to sum to one. Row b is non-zero exactly on bins [first(b), last(b)].
struct MelBands {
  int n_fft = 0;
  int sample_rate = 0;
  int n_bands = 0;
  int n_bins = 0;
  std::vector<double> weights;  // [n_bands x n_bins]
  std::vector<int> first_bin;
  std::vector<int> last_bin;

  double weight(int b, int f) const { return weights[static_cast<std::size_t>(b) * n_bins + f]; }
  int band_size(int b) const { return last_bin[b] - first_bin[b] + 1; }
};

/// Throws ValidationError when n_bands < 1, n_bands > n_bins, or any band
/// would contain no bin.
MelBands mel_filterbank(int n_fft, int sample_rate, int n_bands);

}  // namespace spur

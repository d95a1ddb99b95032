#include "spur/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "fftw_lock.hpp"
#include "spur/common.hpp"

namespace spur {

std::mutex& detail::fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

namespace {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(int n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_.get(), out_.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_.get(); }
  const fftw_complex* output() const { return out_.get(); }
  void execute() { fftw_execute(plan_); }
  int size() const { return n_; }

 private:
  int n_;
  std::unique_ptr<double, FftwDeleter> in_;
  std::unique_ptr<fftw_complex, FftwDeleter> out_;
  fftw_plan plan_;
};

}  // namespace

WindowType parse_window(std::string_view name) {
  if (name == "hann") return WindowType::Hann;
  if (name == "rectangular" || name == "rect") return WindowType::Rectangular;
  throw ValidationError("unknown window '" + std::string(name) + "' (expected hann or rectangular)");
}

std::string to_string(WindowType w) { return w == WindowType::Hann ? "hann" : "rectangular"; }

void StftConfig::validate() const {
  if (n_fft < 2) throw ValidationError("n_fft must be at least 2");
  if (win_length < 1 || win_length > n_fft)
    throw ValidationError("win_length must be in [1, n_fft]");
  if (hop < 1) throw ValidationError("hop must be at least 1");
}

std::size_t stft_frame_count(std::size_t n_samples, const StftConfig& cfg) {
  const auto win = static_cast<std::size_t>(cfg.win_length);
  if (n_samples < win) return 0;
  return (n_samples - win) / static_cast<std::size_t>(cfg.hop) + 1;
}

std::vector<double> make_window(WindowType type, int length) {
  std::vector<double> w(static_cast<std::size_t>(length), 1.0);
  if (type == WindowType::Hann)
    for (int t = 0; t < length; ++t)
      w[t] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / length);
  return w;
}

StftTensor::StftTensor(std::size_t n_frames, const StftConfig& cfg, int sample_rate)
    : n_frames_(n_frames),
      n_bins_(static_cast<std::size_t>(cfg.n_bins())),
      cfg_(cfg),
      sample_rate_(sample_rate),
      data_(n_frames * n_bins_ * 4) {}

StftTensor stft(const FoaClip& clip, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t n_frames = stft_frame_count(clip.n_samples(), cfg);
  if (n_frames == 0)
    throw ValidationError("clip of " + std::to_string(clip.n_samples()) +
                          " samples is shorter than one analysis window (" +
                          std::to_string(cfg.win_length) + ")");
  StftTensor out(n_frames, cfg, clip.sample_rate());
  const std::vector<double> window = make_window(cfg.window, cfg.win_length);
  const std::size_t n_bins = out.n_bins();

  // One transform object per worker block of frames.
  const std::size_t blocks = std::min<std::size_t>(worker_count(), n_frames);
  const std::size_t per_block = (n_frames + blocks - 1) / blocks;
  parallel_for(blocks, [&](std::size_t blk) {
    RealFft fft(cfg.n_fft);
    double* in = fft.input();
    std::fill(in, in + cfg.n_fft, 0.0);
    const std::size_t end = std::min(n_frames, (blk + 1) * per_block);
    for (std::size_t n = blk * per_block; n < end; ++n) {
      const std::size_t start = n * static_cast<std::size_t>(cfg.hop);
      for (int m = 0; m < 4; ++m) {
        const auto x = clip.channel(m);
        for (int t = 0; t < cfg.win_length; ++t) in[t] = window[t] * x[start + t];
        fft.execute();
        const fftw_complex* y = fft.output();
        for (std::size_t f = 0; f < n_bins; ++f) out.at(n, f, m) = {y[f][0], y[f][1]};
      }
    }
  });
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelBands mel_filterbank(int n_fft, int sample_rate, int n_bands) {
  if (n_fft < 2 || sample_rate <= 0) throw ValidationError("mel filterbank needs n_fft >= 2 and sample_rate > 0");
  const int n_bins = n_fft / 2 + 1;
  if (n_bands < 1 || n_bands > n_bins)
    throw ValidationError("n_mel_bands must be in [1, " + std::to_string(n_bins) + "], got " +
                          std::to_string(n_bands));

  MelBands mb;
  mb.n_fft = n_fft;
  mb.sample_rate = sample_rate;
  mb.n_bands = n_bands;
  mb.n_bins = n_bins;
  mb.weights.assign(static_cast<std::size_t>(n_bands) * n_bins, 0.0);
  mb.first_bin.assign(n_bands, 0);
  mb.last_bin.assign(n_bands, 0);

  // Edges equally spaced in mel, mapped back to Hz; slopes evaluated in Hz.
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_bands + 2);
  for (int i = 0; i < n_bands + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (n_bands + 1));

  for (int b = 0; b < n_bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    double sum = 0.0;
    int first = -1, last = -1;
    for (int f = 0; f < n_bins; ++f) {
      const double hz = static_cast<double>(f) * sample_rate / n_fft;
      const double w = std::max(0.0, std::min((hz - lo) / (mid - lo), (hi - hz) / (hi - mid)));
      if (w > 0.0) {
        if (first < 0) first = f;
        last = f;
        mb.weights[static_cast<std::size_t>(b) * n_bins + f] = w;
        sum += w;
      }
    }
    if (first < 0)
      throw ValidationError("mel band " + std::to_string(b) + " of " + std::to_string(n_bands) +
                            " contains no DFT bin; reduce n_mel_bands or raise n_fft");
    for (int f = first; f <= last; ++f) mb.weights[static_cast<std::size_t>(b) * n_bins + f] /= sum;
    mb.first_bin[b] = first;
    mb.last_bin[b] = last;
  }
  return mb;
}

}  // namespace spur

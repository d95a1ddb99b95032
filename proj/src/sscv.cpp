#include "spur/sscv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spur/common.hpp"

namespace spur {
namespace {

// Upper-triangle (i, j) pairs in r-vector order.
constexpr std::array<std::array<int, 2>, 6> kPairs = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

}  // namespace

CovarianceSeries::CovarianceSeries(std::size_t n_frames, std::size_t n_bands)
    : n_frames_(n_frames), n_bands_(n_bands), cov_(n_frames * n_bands, Cov4::Zero()) {}

SscvTensor::SscvTensor(std::size_t n_frames, std::size_t n_bands, double epsilon,
                       double power_floor)
    : n_frames_(n_frames),
      n_bands_(n_bands),
      epsilon_(epsilon),
      power_floor_(power_floor),
      values_(n_frames * n_bands * kSscvDim, 0.0) {}

void ExtractionConfig::validate() const {
  stft.validate();
  if (n_mel_bands < 1) throw ValidationError("n_mel_bands must be at least 1");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in [0, 1)");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must be in [0, 1)");
}

CovarianceSeries banded_covariance(const StftTensor& stft, const MelBands& bands) {
  if (static_cast<int>(stft.n_bins()) != bands.n_bins || stft.config().n_fft != bands.n_fft ||
      stft.sample_rate() != bands.sample_rate)
    throw ValidationError("mel bands were built for n_fft=" + std::to_string(bands.n_fft) + " @ " +
                          std::to_string(bands.sample_rate) + " Hz but the STFT has n_fft=" +
                          std::to_string(stft.config().n_fft) + " @ " +
                          std::to_string(stft.sample_rate()) + " Hz");
  const std::size_t n_bands = static_cast<std::size_t>(bands.n_bands);
  CovarianceSeries out(stft.n_frames(), n_bands);
  parallel_for(stft.n_frames(), [&](std::size_t n) {
    for (std::size_t b = 0; b < n_bands; ++b) {
      Cov4 acc = Cov4::Zero();
      for (int f = bands.first_bin[b]; f <= bands.last_bin[b]; ++f) {
        const double w = bands.weight(static_cast<int>(b), f);
        const std::complex<double>* x = stft.bin(n, static_cast<std::size_t>(f));
        for (int i = 0; i < 4; ++i) {
          acc(i, i) += w * std::norm(x[i]);
          for (int j = i + 1; j < 4; ++j) acc(i, j) += w * (x[i] * std::conj(x[j]));
        }
      }
      const double inv_size = 1.0 / bands.band_size(static_cast<int>(b));
      Cov4& c = out.at(n, b);
      for (int i = 0; i < 4; ++i) {
        c(i, i) = acc(i, i).real() * inv_size;
        for (int j = i + 1; j < 4; ++j) {
          c(i, j) = acc(i, j) * inv_size;
          c(j, i) = std::conj(c(i, j));
        }
      }
    }
  });
  return out;
}

CovarianceSeries smooth(const CovarianceSeries& cov, double alpha) {
  if (cov.smoothed()) throw ValidationError("covariance series is already smoothed");
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw ValidationError("smoothing coefficient alpha must be in [0, 1), got " +
                          std::to_string(alpha));
  CovarianceSeries out = cov;
  for (std::size_t n = 1; n < cov.n_frames(); ++n)
    for (std::size_t b = 0; b < cov.n_bands(); ++b)
      out.at(n, b) = cov.at(n, b) + alpha * (out.at(n - 1, b) - cov.at(n, b));
  out.mark_smoothed(alpha);
  return out;
}

std::array<double, kSscvDim> covariance_to_r(const Cov4& c) {
  std::array<double, kSscvDim> r{};
  for (int i = 0; i < 4; ++i) r[i] = c(i, i).real();
  int k = 4;
  for (const auto& [i, j] : kPairs) {
    // (C + C*)/sqrt2 and (-iC + iC*)/sqrt2
    r[k++] = std::numbers::sqrt2 * c(i, j).real();
    r[k++] = std::numbers::sqrt2 * c(i, j).imag();
  }
  return r;
}

Cov4 r_to_covariance(const std::array<double, kSscvDim>& r) {
  Cov4 c = Cov4::Zero();
  for (int i = 0; i < 4; ++i) c(i, i) = r[i];
  int k = 4;
  for (const auto& [i, j] : kPairs) {
    c(i, j) = std::complex<double>(r[k], r[k + 1]) / std::numbers::sqrt2;
    c(j, i) = std::conj(c(i, j));
    k += 2;
  }
  return c;
}

SscvTensor vectorize(const CovarianceSeries& cov, double epsilon) {
  double max_power = 0.0;
  for (std::size_t n = 0; n < cov.n_frames(); ++n)
    for (std::size_t b = 0; b < cov.n_bands(); ++b)
      max_power = std::max(max_power, cov.at(n, b)(0, 0).real());
  const double floor = std::max(epsilon * max_power, kAbsolutePowerFloor);

  SscvTensor out(cov.n_frames(), cov.n_bands(), epsilon, floor);
  for (std::size_t n = 0; n < cov.n_frames(); ++n) {
    for (std::size_t b = 0; b < cov.n_bands(); ++b) {
      const auto r = covariance_to_r(cov.at(n, b));
      const double r1 = std::max(r[0], floor);
      out.at(n, b, 0) = std::log(r1);
      for (int k = 1; k < kSscvDim; ++k) out.at(n, b, k) = r[k] / r1;
    }
  }
  return out;
}

CovarianceSeries devectorize(const SscvTensor& sscv) {
  CovarianceSeries out(sscv.n_frames(), sscv.n_bands());
  for (std::size_t n = 0; n < sscv.n_frames(); ++n) {
    for (std::size_t b = 0; b < sscv.n_bands(); ++b) {
      std::array<double, kSscvDim> r{};
      for (int k = 0; k < kSscvDim; ++k)
        if (!std::isfinite(sscv.at(n, b, k)))
          throw ValidationError("non-finite SSCV value at frame " + std::to_string(n) +
                                ", band " + std::to_string(b));
      r[0] = std::exp(sscv.at(n, b, 0));
      for (int k = 1; k < kSscvDim; ++k) r[k] = sscv.at(n, b, k) * r[0];
      out.at(n, b) = r_to_covariance(r);
    }
  }
  return out;
}

CovarianceSeries clip_covariance(const FoaClip& clip, const StftConfig& stft_cfg,
                                 int n_mel_bands) {
  const MelBands bands = mel_filterbank(stft_cfg.n_fft, clip.sample_rate(), n_mel_bands);
  return banded_covariance(stft(clip, stft_cfg), bands);
}

SscvTensor extract_features(const FoaClip& clip, const ExtractionConfig& cfg) {
  cfg.validate();
  return vectorize(smooth(clip_covariance(clip, cfg.stft, cfg.n_mel_bands), cfg.alpha),
                   cfg.epsilon);
}

}  // namespace spur

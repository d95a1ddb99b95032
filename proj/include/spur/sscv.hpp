#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

#include "spur/foa.hpp"
#include "spur/spectral.hpp"

namespace spur {

using Cov4 = Eigen::Matrix4cd;

/// Per-frame, per-band 4x4 Hermitian channel covariance.
class CovarianceSeries {
 public:
  CovarianceSeries(std::size_t n_frames, std::size_t n_bands);

  std::size_t n_frames() const { return n_frames_; }
  std::size_t n_bands() const { return n_bands_; }

  Cov4& at(std::size_t n, std::size_t b) { return cov_[n * n_bands_ + b]; }
  const Cov4& at(std::size_t n, std::size_t b) const { return cov_[n * n_bands_ + b]; }

  bool smoothed() const { return alpha_.has_value(); }
  std::optional<double> alpha() const { return alpha_; }
  void mark_smoothed(double alpha) { alpha_ = alpha; }

 private:
  std::size_t n_frames_;
  std::size_t n_bands_;
  std::vector<Cov4, Eigen::aligned_allocator<Cov4>> cov_;
  std::optional<double> alpha_;
};

inline constexpr int kSscvDim = 16;

/// Real feature tensor [frame][band][16].
class SscvTensor {
 public:
  SscvTensor(std::size_t n_frames, std::size_t n_bands, double epsilon, double power_floor);

  std::size_t n_frames() const { return n_frames_; }
  std::size_t n_bands() const { return n_bands_; }
  double epsilon() const { return epsilon_; }
  /// Absolute floor applied to r1 (epsilon times the largest r1, at least kAbsolutePowerFloor).
  double power_floor() const { return power_floor_; }

  double& at(std::size_t n, std::size_t b, std::size_t k) {
    return values_[(n * n_bands_ + b) * kSscvDim + k];
  }
  double at(std::size_t n, std::size_t b, std::size_t k) const {
    return values_[(n * n_bands_ + b) * kSscvDim + k];
  }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

 private:
  std::size_t n_frames_;
  std::size_t n_bands_;
  double epsilon_;
  double power_floor_;
  std::vector<double> values_;
};

/// Lowest r1 ever used, so a silent clip still yields a finite log.
inline constexpr double kAbsolutePowerFloor = 1e-30;

struct ExtractionConfig {
  StftConfig stft;
  int n_mel_bands = 64;
  double alpha = 0.8;
  double epsilon = 1e-10;

  void validate() const;
};

/// C(n,b) = 1/|B_b| * sum_{f in B_b} W_b(f) X(n,f) X(n,f)^H.
CovarianceSeries banded_covariance(const StftTensor& stft, const MelBands& bands);

/// C'(0) = C(0); C'(n) = (1-alpha) C(n) + alpha C'(n-1), evaluated as
/// C(n) + alpha (C'(n-1) - C(n)) so constant input is reproduced exactly.
CovarianceSeries smooth(const CovarianceSeries& cov, double alpha);

/// Ordered r-vector: four diagonal powers, then sqrt2*(Re, Im) of
/// C12, C13, C14, C23, C24, C34.
std::array<double, kSscvDim> covariance_to_r(const Cov4& c);
Cov4 r_to_covariance(const std::array<double, kSscvDim>& r);

/// [log r1~, r2/r1~, ..., r16/r1~] with r1~ = max(r1, floor), floor =
/// max(epsilon * max_{n,b} r1, kAbsolutePowerFloor).
SscvTensor vectorize(const CovarianceSeries& cov, double epsilon);

/// Exact inverse of vectorize wherever r1 was above the floor.
CovarianceSeries devectorize(const SscvTensor& sscv);

/// vectorize(smooth(banded_covariance(stft(clip)), alpha), epsilon).
SscvTensor extract_features(const FoaClip& clip, const ExtractionConfig& cfg);

/// The covariance stage only (no smoothing), for oracles and DoA.
CovarianceSeries clip_covariance(const FoaClip& clip, const StftConfig& stft_cfg, int n_mel_bands);

}  // namespace spur

#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace spur {

enum class ChannelOrder { WXYZ, ACN };  // ACN first order is W, Y, Z, X
enum class Normalization { SN3D, N3D };

struct ChannelConvention {
  ChannelOrder order = ChannelOrder::WXYZ;
  Normalization normalization = Normalization::SN3D;

  static constexpr ChannelConvention canonical() { return {}; }
  /// Accepts "wxyz", "acn", "wxyz/n3d", "acn/sn3d", ... (case-insensitive).
  static ChannelConvention parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const ChannelConvention&, const ChannelConvention&) = default;
};

/// Four equal-length rows of samples in some stated convention.
using FoaChannels = std::array<std::vector<double>, 4>;

/// First-order ambisonic clip, always held as (W, X, Y, Z) / SN3D.
class FoaClip {
 public:
  FoaClip() = default;
  /// Takes canonical rows. Throws ValidationError if rows differ in length
  /// or the sample rate is not positive.
  FoaClip(FoaChannels channels, int sample_rate);

  static FoaClip silence(std::size_t n_samples, int sample_rate);

  std::size_t n_samples() const { return channels_[0].size(); }
  int sample_rate() const { return sample_rate_; }
  double duration() const { return static_cast<double>(n_samples()) / sample_rate_; }

  std::span<const double> channel(std::size_t m) const { return channels_.at(m); }
  std::span<double> channel(std::size_t m) { return channels_.at(m); }
  const FoaChannels& channels() const { return channels_; }

  /// Per-sample sum of another clip of the same length and rate.
  FoaClip& operator+=(const FoaClip& other);
  FoaClip& operator*=(double gain);

 private:
  FoaChannels channels_{};
  int sample_rate_ = 1;
};

/// Reorders and rescales canonical rows into `target`.
FoaChannels to_convention(const FoaChannels& canonical, ChannelConvention target);
/// Inverse of to_convention: rows in `source` back to (W, X, Y, Z) / SN3D.
FoaChannels from_convention(const FoaChannels& rows, ChannelConvention source);

/// Proper rotation in the listener frame (x front, y left, z up).
class Rotation3 {
 public:
  Rotation3() : m_(Eigen::Matrix3d::Identity()) {}
  /// Throws ValidationError unless RᵀR = I and det R = +1 within 1e-12.
  explicit Rotation3(const Eigen::Matrix3d& m);

  /// Intrinsic z-y-x (yaw, then pitch, then roll), degrees. Positive yaw
  /// turns +x towards +y, i.e. increases azimuth.
  static Rotation3 from_ypr(double yaw_deg, double pitch_deg, double roll_deg);
  static Rotation3 about_axis(const Eigen::Vector3d& axis, double angle_rad);

  const Eigen::Matrix3d& matrix() const { return m_; }
  Eigen::Vector3d apply(const Eigen::Vector3d& v) const { return m_ * v; }
  /// (this * other) applies `other` first.
  Rotation3 operator*(const Rotation3& other) const;
  Rotation3 inverse() const;

 private:
  Eigen::Matrix3d m_;
};

/// Rotates the sound field: a plane wave heard from direction u is afterwards
/// heard from R·u. W is untouched; (X, Y, Z) is multiplied by R per sample.
FoaClip rotate_field(const FoaClip& clip, const Rotation3& r);

}  // namespace spur

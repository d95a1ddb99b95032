#include "spur/foa.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "spur/common.hpp"

namespace spur {
namespace {

// Row of canonical channel c (0=W,1=X,2=Y,3=Z) inside a file of `order`.
constexpr std::array<int, 4> kAcnRowOf = {0, 3, 1, 2};

int row_of(ChannelOrder order, int canonical) {
  return order == ChannelOrder::WXYZ ? canonical : kAcnRowOf[canonical];
}

double n3d_gain(Normalization n, int canonical) {
  // First-order N3D = SN3D * sqrt(3) on the directional channels.
  return (n == Normalization::N3D && canonical != 0) ? std::sqrt(3.0) : 1.0;
}

}  // namespace

ChannelConvention ChannelConvention::parse(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  ChannelConvention conv;
  std::string order = s, norm;
  if (auto slash = s.find('/'); slash != std::string::npos) {
    order = s.substr(0, slash);
    norm = s.substr(slash + 1);
  }
  if (order == "wxyz") {
    conv.order = ChannelOrder::WXYZ;
  } else if (order == "acn" || order == "wyzx") {
    conv.order = ChannelOrder::ACN;
  } else {
    throw ValidationError("unknown channel ordering '" + order + "' (expected wxyz or acn)");
  }
  if (norm.empty() || norm == "sn3d") {
    conv.normalization = Normalization::SN3D;
  } else if (norm == "n3d") {
    conv.normalization = Normalization::N3D;
  } else {
    throw ValidationError("unknown normalization '" + norm + "' (expected sn3d or n3d)");
  }
  return conv;
}

std::string ChannelConvention::to_string() const {
  return std::string(order == ChannelOrder::WXYZ ? "wxyz" : "acn") +
         (normalization == Normalization::SN3D ? "/sn3d" : "/n3d");
}

FoaClip::FoaClip(FoaChannels channels, int sample_rate)
    : channels_(std::move(channels)), sample_rate_(sample_rate) {
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  for (const auto& ch : channels_)
    if (ch.size() != channels_[0].size())
      throw ValidationError("FOA channels must all have the same length");
}

FoaClip FoaClip::silence(std::size_t n_samples, int sample_rate) {
  FoaChannels ch;
  for (auto& c : ch) c.assign(n_samples, 0.0);
  return FoaClip(std::move(ch), sample_rate);
}

FoaClip& FoaClip::operator+=(const FoaClip& other) {
  if (other.n_samples() != n_samples() || other.sample_rate_ != sample_rate_)
    throw ValidationError("cannot mix clips of different length or sample rate");
  for (int m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < n_samples(); ++i) channels_[m][i] += other.channels_[m][i];
  return *this;
}

FoaClip& FoaClip::operator*=(double gain) {
  for (auto& ch : channels_)
    for (auto& v : ch) v *= gain;
  return *this;
}

FoaChannels to_convention(const FoaChannels& canonical, ChannelConvention target) {
  FoaChannels out;
  for (int c = 0; c < 4; ++c) {
    auto& row = out[row_of(target.order, c)];
    row = canonical[c];
    const double g = n3d_gain(target.normalization, c);
    if (g != 1.0)
      for (auto& v : row) v *= g;
  }
  return out;
}

FoaChannels from_convention(const FoaChannels& rows, ChannelConvention source) {
  FoaChannels out;
  for (int c = 0; c < 4; ++c) {
    out[c] = rows[row_of(source.order, c)];
    const double g = n3d_gain(source.normalization, c);
    if (g != 1.0)
      for (auto& v : out[c]) v /= g;
  }
  return out;
}

Rotation3::Rotation3(const Eigen::Matrix3d& m) : m_(m) {
  const double ortho = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (!(ortho <= 1e-12) || !(std::abs(det - 1.0) <= 1e-12))
    throw ValidationError("rotation matrix is not proper orthogonal (|RtR-I|=" +
                          std::to_string(ortho) + ", det=" + std::to_string(det) + ")");
}

Rotation3 Rotation3::from_ypr(double yaw_deg, double pitch_deg, double roll_deg) {
  constexpr double k = std::numbers::pi / 180.0;
  const Eigen::Matrix3d m = (Eigen::AngleAxisd(yaw_deg * k, Eigen::Vector3d::UnitZ()) *
                             Eigen::AngleAxisd(pitch_deg * k, Eigen::Vector3d::UnitY()) *
                             Eigen::AngleAxisd(roll_deg * k, Eigen::Vector3d::UnitX()))
                                .toRotationMatrix();
  return Rotation3(m);
}

Rotation3 Rotation3::about_axis(const Eigen::Vector3d& axis, double angle_rad) {
  if (!(axis.norm() > 0.0)) throw ValidationError("rotation axis must be non-zero");
  return Rotation3(Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix());
}

Rotation3 Rotation3::operator*(const Rotation3& other) const {
  Rotation3 r;
  r.m_ = m_ * other.m_;
  return r;
}

Rotation3 Rotation3::inverse() const {
  Rotation3 r;
  r.m_ = m_.transpose();
  return r;
}

FoaClip rotate_field(const FoaClip& clip, const Rotation3& r) {
  if (r.matrix() == Eigen::Matrix3d::Identity()) return clip;
  FoaChannels out = clip.channels();
  const auto& m = r.matrix();
  for (std::size_t i = 0; i < clip.n_samples(); ++i) {
    const Eigen::Vector3d v(clip.channel(1)[i], clip.channel(2)[i], clip.channel(3)[i]);
    const Eigen::Vector3d w = m * v;
    out[1][i] = w.x();
    out[2][i] = w.y();
    out[3][i] = w.z();
  }
  return FoaClip(std::move(out), clip.sample_rate());
}

}  // namespace spur

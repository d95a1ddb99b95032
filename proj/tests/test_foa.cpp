#include <doctest.h>

#include <cmath>
#include <numbers>

#include "spur/common.hpp"
#include "spur/foa.hpp"

using namespace spur;

namespace {

FoaClip random_clip(std::size_t n, std::uint64_t seed) {
  Xoshiro256 r(seed);
  FoaChannels ch;
  for (auto& c : ch) {
    c.resize(n);
    for (auto& v : c) v = r.normal();
  }
  return FoaClip(std::move(ch), 16000);
}

}  // namespace

TEST_CASE("convention parsing") {
  CHECK(ChannelConvention::parse("WXYZ") == ChannelConvention::canonical());
  CHECK(ChannelConvention::parse("acn").order == ChannelOrder::ACN);
  CHECK(ChannelConvention::parse("acn/n3d").normalization == Normalization::N3D);
  CHECK(ChannelConvention::parse("wyzx/sn3d").order == ChannelOrder::ACN);
  CHECK(ChannelConvention::parse("acn/n3d").to_string() == "acn/n3d");
  CHECK_THROWS_AS(ChannelConvention::parse("xyzw"), ValidationError);
  CHECK_THROWS_AS(ChannelConvention::parse("acn/fuma"), ValidationError);
}

TEST_CASE("ACN reorders W, Y, Z, X and N3D scales directional rows by sqrt 3") {
  FoaChannels canon = {std::vector<double>{1.0}, {2.0}, {3.0}, {4.0}};  // W X Y Z
  const auto acn = to_convention(canon, ChannelConvention::parse("acn"));
  CHECK(acn[0][0] == 1.0);
  CHECK(acn[1][0] == 3.0);  // Y
  CHECK(acn[2][0] == 4.0);  // Z
  CHECK(acn[3][0] == 2.0);  // X
  const auto n3d = to_convention(canon, ChannelConvention::parse("wxyz/n3d"));
  CHECK(n3d[0][0] == 1.0);
  CHECK(n3d[1][0] == doctest::Approx(2.0 * std::sqrt(3.0)));
  for (const char* name : {"wxyz", "acn", "wxyz/n3d", "acn/n3d"}) {
    const auto conv = ChannelConvention::parse(name);
    const auto back = from_convention(to_convention(canon, conv), conv);
    for (int m = 0; m < 4; ++m) CHECK(back[m][0] == doctest::Approx(canon[m][0]).epsilon(1e-15));
  }
}

TEST_CASE("clip validation and arithmetic") {
  CHECK_THROWS_AS(FoaClip(FoaChannels{std::vector<double>(3), std::vector<double>(4), std::vector<double>(4),
                                      std::vector<double>(4)},
                          16000),
                  ValidationError);
  CHECK_THROWS_AS(FoaClip(FoaChannels{}, 0), ValidationError);
  FoaClip a = random_clip(10, 1);
  const FoaClip b = random_clip(10, 2);
  FoaClip c = a;
  c += b;
  c *= 2.0;
  for (int m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < 10; ++i) CHECK(c.channel(m)[i] == 2.0 * (a.channel(m)[i] + b.channel(m)[i]));
  CHECK_THROWS_AS(a += random_clip(11, 3), ValidationError);
  CHECK(FoaClip::silence(5, 8000).duration() == doctest::Approx(5.0 / 8000));
}

TEST_CASE("rotation construction rejects improper matrices") {
  Eigen::Matrix3d reflect = Eigen::Matrix3d::Identity();
  reflect(0, 0) = -1.0;
  CHECK_THROWS_AS(Rotation3{reflect}, ValidationError);
  CHECK_THROWS_AS(Rotation3{2.0 * Eigen::Matrix3d::Identity()}, ValidationError);
  CHECK_THROWS_AS(Rotation3::about_axis(Eigen::Vector3d::Zero(), 1.0), ValidationError);
}

TEST_CASE("positive yaw moves the front towards the left") {
  const auto r = Rotation3::from_ypr(90.0, 0.0, 0.0);
  const Eigen::Vector3d v = r.apply(Eigen::Vector3d::UnitX());
  CHECK(v.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v.y() == doctest::Approx(1.0));
}

TEST_CASE("rotation composition and inverse") {
  Xoshiro256 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = Rotation3::from_ypr(rng.uniform(-180, 180), rng.uniform(-90, 90), rng.uniform(-180, 180));
    const auto b = Rotation3::from_ypr(rng.uniform(-180, 180), rng.uniform(-90, 90), rng.uniform(-180, 180));
    const Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    CHECK(((a * b).apply(v) - a.apply(b.apply(v))).norm() < 1e-12);
    CHECK(((a.inverse() * a).matrix() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  }
}

TEST_CASE("rotate_field moves a plane wave and leaves W alone") {
  // Plane wave from azimuth 0: X = W, Y = Z = 0.
  std::vector<double> s = {0.5, -1.0, 0.25};
  FoaChannels ch = {s, s, std::vector<double>(3, 0.0), std::vector<double>(3, 0.0)};
  const FoaClip clip(ch, 16000);
  const auto r = Rotation3::from_ypr(30.0, 0.0, 0.0);
  const FoaClip out = rotate_field(clip, r);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.channel(0)[i] == s[i]);
    CHECK(out.channel(1)[i] == doctest::Approx(s[i] * std::cos(std::numbers::pi / 6)));
    CHECK(out.channel(2)[i] == doctest::Approx(s[i] * std::sin(std::numbers::pi / 6)));
  }
  const FoaClip same = rotate_field(clip, Rotation3{});
  CHECK(same.channels() == clip.channels());
  const FoaClip round = rotate_field(rotate_field(clip, r), r.inverse());
  for (int m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < 3; ++i) CHECK(round.channel(m)[i] == doctest::Approx(clip.channel(m)[i]));
}

#include <doctest.h>

#include <cstring>

#include "spur/wav.hpp"
#include "test_util.hpp"

using namespace spur;
using spur::test::TempDir;

namespace {

void put16(std::vector<unsigned char>& b, unsigned v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}
void put32(std::vector<unsigned char>& b, unsigned v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
void tag(std::vector<unsigned char>& b, const char* t) { b.insert(b.end(), t, t + 4); }

// Hand-built PCM16 file so the reader is checked against the format itself.
std::vector<unsigned char> pcm16_file(int channels, int rate, const std::vector<short>& interleaved) {
  std::vector<unsigned char> b;
  const unsigned data_bytes = static_cast<unsigned>(interleaved.size() * 2);
  tag(b, "RIFF");
  put32(b, 36 + data_bytes);
  tag(b, "WAVE");
  tag(b, "fmt ");
  put32(b, 16);
  put16(b, 1);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * 2);
  put16(b, channels * 2);
  put16(b, 16);
  tag(b, "data");
  put32(b, data_bytes);
  for (short s : interleaved) put16(b, static_cast<unsigned short>(s));
  return b;
}

}  // namespace

TEST_CASE("reads hand-built PCM16 with 1/32768 scaling") {
  TempDir dir("wav");
  test::write_bytes(dir / "a.wav", pcm16_file(2, 8000, {16384, -32768, 32767, 0}));
  const WavAudio w = read_wav(dir / "a.wav");
  CHECK(w.sample_rate == 8000);
  CHECK(w.encoding == SampleEncoding::Pcm16);
  REQUIRE(w.channels.size() == 2);
  CHECK(w.channels[0] == std::vector<double>{0.5, 32767.0 / 32768.0});
  CHECK(w.channels[1] == std::vector<double>{-1.0, 0.0});
}

TEST_CASE("float32 round trip is exact for float-representable samples") {
  TempDir dir("wav");
  const FoaClip clip = test::noise_clip(257, 3);
  FoaChannels rounded;
  for (int m = 0; m < 4; ++m)
    for (double v : clip.channel(m)) rounded[m].push_back(static_cast<float>(v));
  const FoaClip exact(rounded, 16000);
  save_foa_wav(exact, dir / "f.wav", ChannelConvention::canonical());
  const FoaClip back = load_foa_wav(dir / "f.wav", ChannelConvention::canonical());
  CHECK(back.channels() == exact.channels());
  CHECK(back.sample_rate() == 16000);
}

TEST_CASE("convention survives a write in ACN/N3D and a read declaring the same") {
  TempDir dir("wav");
  FoaChannels ch = {std::vector<double>{0.25}, {0.5}, {-0.125}, {0.0625}};
  const FoaClip clip(ch, 16000);
  const auto conv = ChannelConvention::parse("acn/n3d");
  save_foa_wav(clip, dir / "c.wav", conv);
  const WavAudio raw = read_wav(dir / "c.wav");
  CHECK(static_cast<float>(raw.channels[1][0]) == static_cast<float>(-0.125 * std::sqrt(3.0)));  // Y in slot 1
  const FoaClip back = load_foa_wav(dir / "c.wav", conv);
  for (int m = 0; m < 4; ++m) CHECK(back.channel(m)[0] == doctest::Approx(ch[m][0]).epsilon(1e-6));
}

TEST_CASE("PCM16 writes clamp and round") {
  TempDir dir("wav");
  write_wav(dir / "p.wav", {{2.0, -2.0, 0.5, 1.0 / 65536.0 * 1.01}}, 16000, SampleEncoding::Pcm16);
  const auto b = test::read_bytes(dir / "p.wav");
  REQUIRE(b.size() == 44 + 8);
  short s[4];
  std::memcpy(s, b.data() + 44, 8);
  CHECK(s[0] == 32767);
  CHECK(s[1] == -32768);
  CHECK(s[2] == 16384);
  CHECK(s[3] == 1);
}

TEST_CASE("error kinds") {
  TempDir dir("wav");
  auto kind_of = [&](const std::filesystem::path& p) {
    try {
      load_foa_wav(p, ChannelConvention::canonical());
    } catch (const WavError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  test::write_bytes(dir / "junk.wav", std::vector<unsigned char>(64, 'x'));
  CHECK(kind_of(dir / "junk.wav") == static_cast<int>(WavError::Kind::NotRiff));
  test::write_bytes(dir / "stereo.wav", pcm16_file(2, 16000, {1, 2}));
  CHECK(kind_of(dir / "stereo.wav") == static_cast<int>(WavError::Kind::ChannelCount));
  auto cut = pcm16_file(4, 16000, {1, 2, 3, 4, 5, 6, 7, 8});
  cut.resize(cut.size() - 3);
  test::write_bytes(dir / "cut.wav", cut);
  CHECK(kind_of(dir / "cut.wav") == static_cast<int>(WavError::Kind::Truncated));
  auto eight_bit = pcm16_file(4, 16000, {1, 2, 3, 4});
  eight_bit[34] = 8;  // bits per sample
  test::write_bytes(dir / "u8.wav", eight_bit);
  CHECK(kind_of(dir / "u8.wav") == static_cast<int>(WavError::Kind::UnsupportedEncoding));
  CHECK_THROWS_AS(load_foa_wav(dir / "missing.wav", ChannelConvention::canonical()), IoError);
}

TEST_CASE("mono loader") {
  TempDir dir("wav");
  test::write_bytes(dir / "m.wav", pcm16_file(1, 22050, {8192, -8192}));
  int sr = 0;
  CHECK(load_mono_wav(dir / "m.wav", &sr) == std::vector<double>{0.25, -0.25});
  CHECK(sr == 22050);
}

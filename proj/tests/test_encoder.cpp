#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "spur/encoder.hpp"
#include "test_util.hpp"

using namespace spur;
using spur::test::TempDir;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.conv_channels = {4, 6};
  cfg.embed_dim = 32;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.ffn_mult = 2;
  cfg.adapter_out_dim = 24;
  cfg.max_patches = 64;
  return cfg;
}

SscvTensor random_sscv(std::size_t t, std::size_t b, std::uint64_t seed) {
  Xoshiro256 r(seed);
  SscvTensor s(t, b, 1e-10, 1e-30);
  for (auto& v : s.values()) v = r.normal();
  return s;
}

Tensor tensor_of(std::vector<std::uint64_t> shape, std::vector<float> data) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(data);
  return t;
}

struct Recorder : ForwardObserver {
  double worst_row_sum = 0.0;
  int attention_calls = 0;
  void on_attention(int, int, const Eigen::MatrixXd& probs) override {
    ++attention_calls;
    for (Eigen::Index r = 0; r < probs.rows(); ++r)
      worst_row_sum = std::max(worst_row_sum, std::abs(probs.row(r).sum() - 1.0));
  }
};

}  // namespace

TEST_CASE("exact-erf GELU") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
  CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  for (double x : {0.3, 1.7, 4.0}) CHECK(gelu(-x) == doctest::Approx(gelu(x) - x).epsilon(1e-14));
}

TEST_CASE("conv of an impulse reproduces the flipped kernel") {
  Volume in(1, 1, 4, 4);
  in.at(0, 0, 1, 2) = 1.0;
  const Tensor w = tensor_of({1, 1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor b = tensor_of({1}, {0.5f});
  const Volume out = conv_same_133(in, w, b);
  REQUIRE(out.c == 1);
  REQUIRE(out.b == 4);
  REQUIRE(out.d == 4);
  // Hand-computed: out(b, d) = 0.5 + k[2 - b][3 - d] where the index is valid.
  CHECK(out.at(0, 0, 0, 1) == 9.5);
  CHECK(out.at(0, 0, 0, 2) == 8.5);
  CHECK(out.at(0, 0, 0, 3) == 7.5);
  CHECK(out.at(0, 0, 1, 2) == 5.5);
  CHECK(out.at(0, 0, 2, 1) == 3.5);
  CHECK(out.at(0, 0, 2, 3) == 1.5);
  CHECK(out.at(0, 0, 3, 3) == 0.5);
  CHECK(out.at(0, 0, 0, 0) == 0.5);
  double total = 0.0;
  for (double v : out.data) total += v - 0.5;
  CHECK(total == 45.0);
}

TEST_CASE("conv sums over input channels") {
  Volume in(2, 2, 3, 3);
  in.at(0, 1, 1, 1) = 2.0;
  in.at(1, 1, 1, 1) = 3.0;
  std::vector<float> k(2 * 9, 0.0f);
  k[4] = 1.0f;       // centre tap, channel 0
  k[9 + 4] = 10.0f;  // centre tap, channel 1
  const Volume out = conv_same_133(in, tensor_of({1, 2, 1, 3, 3}, k), tensor_of({1}, {0.0f}));
  CHECK(out.at(0, 1, 1, 1) == 32.0);
  CHECK(out.at(0, 0, 1, 1) == 0.0);  // no mixing along time
  CHECK_THROWS_AS(conv_same_133(Volume(3, 1, 3, 3), tensor_of({1, 2, 1, 3, 3}, k), tensor_of({1}, {0.0f})),
                  ValidationError);
}

TEST_CASE("ceil-mode pooling ignores the padded edge") {
  Volume in(1, 4, 4, 4);
  for (std::size_t i = 0; i < in.data.size(); ++i) in.data[i] = -1000.0 + static_cast<double>(i);
  const Volume out = max_pool_333(in);
  CHECK(out.t == 2);
  CHECK(out.b == 2);
  CHECK(out.d == 2);
  CHECK(out.at(0, 0, 0, 0) == in.at(0, 2, 2, 2));
  CHECK(out.at(0, 1, 1, 1) == in.at(0, 3, 3, 3));  // a lone negative cell, not a zero pad
  CHECK(out.at(0, 1, 0, 1) == in.at(0, 3, 2, 3));
}

TEST_CASE("channel layer norm per voxel") {
  Volume v(4, 1, 1, 2);
  const double vals[4] = {1.0, 2.0, 3.0, 6.0};
  for (int c = 0; c < 4; ++c) {
    v.at(c, 0, 0, 0) = vals[c];
    v.at(c, 0, 0, 1) = 5.0;  // constant voxel
  }
  Tensor scale = tensor_of({4}, {1, 1, 1, 1}), offset = tensor_of({4}, {0, 0, 0, 0});
  channel_layer_norm(v, scale, offset);
  double mean = 0.0, var = 0.0;
  for (int c = 0; c < 4; ++c) mean += v.at(c, 0, 0, 0) / 4;
  for (int c = 0; c < 4; ++c) var += std::pow(v.at(c, 0, 0, 0) - mean, 2) / 4;
  CHECK(std::abs(mean) < 1e-15);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
  for (int c = 0; c < 4; ++c) CHECK(v.at(c, 0, 0, 1) == 0.0);
}

TEST_CASE("shape arithmetic for the default config") {
  const EncoderShape s = encoder_shape(EncoderConfig{}, 998, 64);
  REQUIRE(s.block_dims.size() == 2);
  CHECK(s.block_dims[0] == std::array<int, 3>{333, 22, 6});
  CHECK(s.block_dims[1] == std::array<int, 3>{111, 8, 2});
  CHECK(s.grid_rows == 111);
  CHECK(s.grid_cols == 256);
  CHECK(s.n_patches == 7 * 16);
}

TEST_CASE("encode output shape matches the shape formula") {
  const EncoderConfig cfg = small_config();
  const EncoderWeights w = init_weights(cfg, 3);
  for (auto [t, b] : {std::pair{50, 20}, {97, 64}, {9, 9}}) {
    const TokenSequence out = encode(random_sscv(t, b, 5), w, cfg);
    const EncoderShape s = encoder_shape(cfg, t, b);
    CHECK(out.tokens.rows() == s.n_patches);
    CHECK(out.tokens.cols() == cfg.adapter_out_dim);
  }
}

TEST_CASE("patchify places grid cells time-major and rejects overflow") {
  EncoderConfig cfg = small_config();
  cfg.conv_channels = {1};
  EncoderWeights w = EncoderWeights::shaped(cfg);
  // Grid is 20 rows x 18 cols (col = (c * 3 + b) * 3 + d), so 2 x 2 patches.
  Volume z(2, 20, 3, 3);
  z.at(0, 1, 0, 2) = 7.0;   // row 1, col 2   -> patch 0, cell (1, 2)
  z.at(1, 1, 2, 1) = 9.0;   // row 1, col 16  -> patch 1, cell (1, 0)
  z.at(1, 17, 2, 2) = 8.0;  // row 17, col 17 -> patch 3, cell (1, 1)
  auto probe = [&](int cell) {
    std::fill(w.patch_weight.data.begin(), w.patch_weight.data.end(), 0.0f);
    w.patch_weight.data[cell] = 1.0f;  // token feature 0 reads this cell
    return patchify(z, w, cfg);
  };
  const Eigen::MatrixXd a = probe(1 * 16 + 2);
  REQUIRE(a.rows() == 4);
  CHECK(a(0, 0) == 7.0);
  CHECK(a(1, 0) == 0.0);  // col 18 is padding
  CHECK(probe(1 * 16 + 0)(1, 0) == 9.0);
  CHECK(probe(1 * 16 + 1)(3, 0) == 8.0);
  cfg.max_patches = 3;
  CHECK_THROWS_AS(patchify(z, EncoderWeights::shaped(cfg), cfg), ValidationError);
}

TEST_CASE("a transformer layer has no residual around the FFN") {
  EncoderConfig cfg = small_config();
  cfg.n_layers = 1;
  EncoderWeights w = init_weights(cfg, 9);
  auto& layer = w.layers[0];
  std::fill(layer.fc2_weight.data.begin(), layer.fc2_weight.data.end(), 0.0f);
  for (std::size_t i = 0; i < layer.fc2_bias.data.size(); ++i) layer.fc2_bias.data[i] = static_cast<float>(i);
  Xoshiro256 r(1);
  Eigen::MatrixXd tokens(5, cfg.embed_dim);
  for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = r.normal();
  const Eigen::MatrixXd h = transformer_forward(tokens, w, cfg);
  for (Eigen::Index p = 0; p < h.rows(); ++p)
    for (Eigen::Index j = 0; j < h.cols(); ++j) CHECK(h(p, j) == static_cast<double>(j));
}

TEST_CASE("single-token layer matches a hand-written forward pass") {
  EncoderConfig cfg = small_config();
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  const EncoderWeights w = init_weights(cfg, 17);
  const auto& y = w.layers[0];
  Xoshiro256 r(2);
  Eigen::VectorXd h(cfg.embed_dim);
  for (auto& v : h) v = r.normal();
  auto mat = [](const Tensor& t) {
    Eigen::MatrixXd m(t.shape[0], t.shape[1]);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[i * m.cols() + j];
    return m;
  };
  auto vec = [](const Tensor& t) {
    Eigen::VectorXd v(t.data.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = t.data[i];
    return v;
  };
  // With one token every attention row is [1], so MHA(x) = Wo (Wv x + bv) + bo.
  const double mean = h.mean();
  const double var = (h.array() - mean).square().mean();
  const Eigen::VectorXd x = ((h.array() - mean) / std::sqrt(var + kLayerNormEps)).matrix().cwiseProduct(vec(y.ln_scale)) +
                            vec(y.ln_offset);
  const Eigen::VectorXd a = mat(y.o_weight) * (mat(y.v_weight) * x + vec(y.v_bias)) + vec(y.o_bias);
  Eigen::VectorXd hidden = mat(y.fc1_weight) * (a + h) + vec(y.fc1_bias);
  for (auto& v : hidden) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  const Eigen::VectorXd expect = mat(y.fc2_weight) * hidden + vec(y.fc2_bias);
  const Eigen::MatrixXd got = transformer_forward(h.transpose(), w, cfg);
  CHECK((got.row(0).transpose() - expect).norm() <= 1e-12 * expect.norm());
}

TEST_CASE("attention rows are distributions") {
  const EncoderConfig cfg = small_config();
  Recorder rec;
  encode(random_sscv(80, 30, 4), init_weights(cfg, 1), cfg, &rec);
  CHECK(rec.attention_calls == cfg.n_layers * cfg.n_heads);
  CHECK(rec.worst_row_sum <= 1e-12);
}

TEST_CASE("token permutation equivariance without positional embeddings") {
  const EncoderConfig cfg = small_config();
  EncoderWeights w = init_weights(cfg, 2);
  std::fill(w.pos_embed.data.begin(), w.pos_embed.data.end(), 0.0f);
  Xoshiro256 r(3);
  Eigen::MatrixXd tokens(7, cfg.embed_dim);
  for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = r.normal();
  Eigen::VectorXi perm(7);
  perm << 3, 0, 6, 1, 5, 2, 4;
  Eigen::MatrixXd permuted(7, cfg.embed_dim);
  for (int i = 0; i < 7; ++i) permuted.row(i) = tokens.row(perm(i));
  const Eigen::MatrixXd a = transformer_forward(tokens, w, cfg);
  const Eigen::MatrixXd b = transformer_forward(permuted, w, cfg);
  for (int i = 0; i < 7; ++i) CHECK((b.row(i) - a.row(perm(i))).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("initialization bounds and determinism") {
  const EncoderConfig cfg = small_config();
  const EncoderWeights a = init_weights(cfg, 77), b = init_weights(cfg, 77), c = init_weights(cfg, 78);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (const auto& [name, t] : a.to_named()) {
    const auto fan = init_fan_in(name, t);
    if (name.ends_with("norm.scale")) {
      for (float v : t.data) CHECK(v == 1.0f);
    } else if (fan == 0) {
      for (float v : t.data) CHECK(v == 0.0f);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
      for (float v : t.data) CHECK(std::abs(static_cast<double>(v)) < bound);
    }
  }
  CHECK(init_fan_in("conv0.a.weight", a.blocks[0].conv_a_weight) == 9);
  CHECK(init_fan_in("conv1.a.weight", a.blocks[1].conv_a_weight) == 36);
  CHECK(init_fan_in("pos_embed", a.pos_embed) == 32);
}

TEST_CASE("encode is bit-exact across runs") {
  const EncoderConfig cfg = small_config();
  const SscvTensor s = random_sscv(60, 24, 12);
  const auto x = encode(s, init_weights(cfg, 5), cfg).tokens;
  const auto y = encode(s, init_weights(cfg, 5), cfg).tokens;
  CHECK(x == y);
}

TEST_CASE("weights file round trip") {
  TempDir dir("weights");
  const EncoderConfig cfg = small_config();
  const EncoderWeights w = init_weights(cfg, 4);
  save_weights(w, dir / "w.bin");
  CHECK(load_weights(dir / "w.bin", cfg) == w);
  save_weights(load_weights(dir / "w.bin", cfg), dir / "w2.bin");
  CHECK(test::read_bytes(dir / "w.bin") == test::read_bytes(dir / "w2.bin"));
  const auto names = read_weight_tensors(dir / "w.bin");
  CHECK(names.front().name == "conv0.a.weight");
  CHECK(names.back().name == "adapter.fc2.bias");
}

TEST_CASE("weights file corruption is classified") {
  TempDir dir("weights");
  const EncoderConfig cfg = small_config();
  save_weights(init_weights(cfg, 4), dir / "w.bin");
  const auto good = test::read_bytes(dir / "w.bin");
  auto kind_of = [&](std::vector<unsigned char> bytes) {
    test::write_bytes(dir / "bad.bin", bytes);
    try {
      read_weight_tensors(dir / "bad.bin");
    } catch (const WeightsFileError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(kind_of(bad_magic) == static_cast<int>(WeightsFileError::Kind::BadMagic));
  auto bad_version = good;
  bad_version[8] = 9;
  CHECK(kind_of(bad_version) == static_cast<int>(WeightsFileError::Kind::BadVersion));
  auto truncated = good;
  truncated.resize(20);
  CHECK(kind_of(truncated) == static_cast<int>(WeightsFileError::Kind::Truncated));
  auto trailing = good;
  trailing.push_back(0);
  CHECK(kind_of(trailing) == static_cast<int>(WeightsFileError::Kind::Integrity));
  // First tensor's first dim (after magic, version, count, name) claims a huge size.
  auto oversized = good;
  const std::size_t dim0 = 8 + 4 + 4 + 2 + std::string("conv0.a.weight").size() + 1;
  oversized[dim0 + 5] = 0x7f;
  CHECK(kind_of(oversized) == static_cast<int>(WeightsFileError::Kind::Integrity));
  CHECK_THROWS_AS(read_weight_tensors(dir / "absent.bin"), IoError);
}

TEST_CASE("config mismatch reports a per-tensor shape diff") {
  TempDir dir("weights");
  const EncoderConfig cfg = small_config();
  save_weights(init_weights(cfg, 4), dir / "w.bin");
  EncoderConfig other = cfg;
  other.embed_dim = 48;
  try {
    load_weights(dir / "w.bin", other);
    FAIL("expected a mismatch");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("patch.weight: file [32, 256], config [48, 256]") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  EncoderConfig cfg;
  cfg.n_heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.conv_channels.clear();
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

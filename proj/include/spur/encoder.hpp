#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spur/common.hpp"
#include "spur/sscv.hpp"

namespace spur {

struct EncoderConfig {
  static constexpr int kKernel = 3;  // conv kernel is (1, 3, 3)
  static constexpr int kPool = 3;    // pool (3, 3, 3), stride 3, ceil mode
  static constexpr int kPatch = 16;  // 16 x 16 patches

  std::vector<int> conv_channels = {8, 16};  // one entry per conv block
  int embed_dim = 256;
  int n_layers = 4;
  int n_heads = 4;
  int ffn_mult = 4;
  int adapter_out_dim = 768;
  int max_patches = 512;  // rows of the positional embedding table

  int conv_blocks() const { return static_cast<int>(conv_channels.size()); }
  int ffn_dim() const { return embed_dim * ffn_mult; }
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Dense float tensor, row-major.
struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  static Tensor zeros(std::vector<std::uint64_t> shape);
  std::uint64_t numel() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ConvBlockWeights {
  Tensor conv_a_weight;  // [c_out, c_in, 1, 3, 3]
  Tensor conv_a_bias;    // [c_out]
  Tensor conv_b_weight;  // [c_out, c_out, 1, 3, 3]
  Tensor conv_b_bias;
  Tensor ln_scale;  // [c_out], normalization over channels per voxel
  Tensor ln_offset;

  friend bool operator==(const ConvBlockWeights&, const ConvBlockWeights&) = default;
};

struct TransformerLayerWeights {
  Tensor ln_scale, ln_offset;  // [d]
  Tensor q_weight, q_bias, k_weight, k_bias, v_weight, v_bias, o_weight, o_bias;  // [d, d], [d]
  Tensor fc1_weight, fc1_bias;  // [ffn, d], [ffn]
  Tensor fc2_weight, fc2_bias;  // [d, ffn], [d]

  friend bool operator==(const TransformerLayerWeights&, const TransformerLayerWeights&) = default;
};

struct EncoderWeights {
  std::vector<ConvBlockWeights> blocks;
  Tensor patch_weight;  // [d, 256]
  Tensor patch_bias;    // [d]
  Tensor pos_embed;     // [max_patches, d]
  std::vector<TransformerLayerWeights> layers;
  Tensor adapter_fc1_weight, adapter_fc1_bias;  // [out, d], [out]
  Tensor adapter_fc2_weight, adapter_fc2_bias;  // [out, out], [out]

  /// Zero tensors with the shapes `cfg` requires.
  static EncoderWeights shaped(const EncoderConfig& cfg);

  /// Tensors in file order with their fixed names (see README).
  std::vector<NamedTensor> to_named() const;
  /// Throws ValidationError listing every name or shape that differs from `cfg`.
  static EncoderWeights from_named(const EncoderConfig& cfg, const std::vector<NamedTensor>& tensors);

  friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;
};

/// Linear and conv weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)) from
/// Xoshiro256(seed), drawn in file order; positional embeddings use
/// fan_in = embed_dim; biases 0; norm scales 1 and offsets 0.
EncoderWeights init_weights(const EncoderConfig& cfg, std::uint64_t seed);

/// Fan-in used for the uniform bound of the named tensor, or 0 for tensors
/// initialized to constants.
std::uint64_t init_fan_in(const std::string& name, const Tensor& t);

/// Raised for malformed weight files; `kind` tells the cases apart.
class WeightsFileError : public FormatError {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, Integrity };
  WeightsFileError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// "SPURWGT1" | u32 version=1 | u32 count | {u16 name_len, name, u8 ndim,
/// u64 dims[ndim], f32 payload}*, all little-endian, no padding.
void save_weights(const EncoderWeights& w, const std::filesystem::path& path);
std::vector<NamedTensor> read_weight_tensors(const std::filesystem::path& path);
EncoderWeights load_weights(const std::filesystem::path& path, const EncoderConfig& cfg);

/// Activations: [channels][time][band][component], row-major.
struct Volume {
  int c = 0, t = 0, b = 0, d = 0;
  std::vector<double> data;

  Volume() = default;
  Volume(int c_, int t_, int b_, int d_) : c(c_), t(t_), b(b_), d(d_), data(std::size_t(c_) * t_ * b_ * d_, 0.0) {}

  double& at(int ci, int ti, int bi, int di) { return data[((std::size_t(ci) * t + ti) * b + bi) * d + di]; }
  double at(int ci, int ti, int bi, int di) const { return data[((std::size_t(ci) * t + ti) * b + bi) * d + di]; }
};

/// Hooks for checking internal invariants without changing results.
class ForwardObserver {
 public:
  virtual ~ForwardObserver() = default;
  /// Normalized vector before scale/offset, and the variance of its input.
  virtual void on_layer_norm(std::span<const double> normalized, double input_variance) {
    (void)normalized;
    (void)input_variance;
  }
  /// Row-stochastic attention matrix [P x P] of one head.
  virtual void on_attention(int layer, int head, const Eigen::MatrixXd& probs) {
    (void)layer;
    (void)head;
    (void)probs;
  }
};

inline constexpr double kLayerNormEps = 1e-12;

/// Exact-erf GELU.
double gelu(double x);

/// Same-padded (1,3,3) cross-correlation over (band, component); weight is
/// [c_out, c_in, 1, 3, 3].
Volume conv_same_133(const Volume& in, const Tensor& weight, const Tensor& bias);
/// Per-voxel layer norm across channels, then scale/offset per channel.
void channel_layer_norm(Volume& v, const Tensor& scale, const Tensor& offset, ForwardObserver* obs = nullptr);
/// 3x3x3 window, stride 3, ceil mode; cells past the edge never win.
Volume max_pool_333(const Volume& in);

/// Two (1,3,3) same-padded convs (ReLU between), channel layer norm, then
/// 3x3x3 max pooling with stride 3 and ceil mode.
Volume conv_block_forward(const Volume& z, const ConvBlockWeights& w, ForwardObserver* obs = nullptr);

/// Conv output flattened to a [T' x C*B'*D'] grid, zero-padded to multiples of
/// 16, cut into 16x16 patches in time-major order, projected and offset by
/// positional embeddings. Returns [P x d].
Eigen::MatrixXd patchify(const Volume& z, const EncoderWeights& w, const EncoderConfig& cfg);

/// N layers of h = FFN(MHA(LN(h)) + h).
Eigen::MatrixXd transformer_forward(const Eigen::MatrixXd& tokens, const EncoderWeights& w,
                                    const EncoderConfig& cfg, ForwardObserver* obs = nullptr);

struct TokenSequence {
  Eigen::MatrixXd tokens;  // [P x adapter_out_dim]
};

/// z = W2 GELU(W1 h + b1) + b2 per token.
TokenSequence adapter_forward(const Eigen::MatrixXd& tokens, const EncoderWeights& w,
                              const EncoderConfig& cfg);

TokenSequence encode(const SscvTensor& sscv, const EncoderWeights& w, const EncoderConfig& cfg,
                     ForwardObserver* obs = nullptr);

/// Shape arithmetic of encode for a T x B SSCV input.
struct EncoderShape {
  std::vector<std::array<int, 3>> block_dims;  // (T, B, D) after each block
  int grid_rows = 0;                           // T_K
  int grid_cols = 0;                           // C_K * B_K * D_K
  int patch_rows = 0;                          // ceil(T_K / 16)
  int patch_cols = 0;                          // ceil(grid_cols / 16)
  int n_patches = 0;
};
EncoderShape encoder_shape(const EncoderConfig& cfg, int n_frames, int n_bands);

}  // namespace spur

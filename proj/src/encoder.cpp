#include "spur/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace spur {
namespace {

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// [out, in] float weight as a double matrix.
Eigen::MatrixXd as_matrix(const Tensor& t) {
  const auto rows = static_cast<Eigen::Index>(t.shape.at(0));
  const auto cols = static_cast<Eigen::Index>(t.numel() / t.shape.at(0));
  return Eigen::Map<const RowMajorF>(t.data.data(), rows, cols).cast<double>();
}

Eigen::RowVectorXd as_row(const Tensor& t) {
  return Eigen::Map<const Eigen::RowVectorXf>(t.data.data(), static_cast<Eigen::Index>(t.numel()))
      .cast<double>();
}

// x [P x in] -> x W^T + b
Eigen::MatrixXd linear(const Eigen::MatrixXd& x, const Tensor& weight, const Tensor& bias) {
  Eigen::MatrixXd y = x * as_matrix(weight).transpose();
  y.rowwise() += as_row(bias);
  return y;
}

Eigen::MatrixXd gelu_all(Eigen::MatrixXd x) {
  x = x.unaryExpr([](double v) { return spur::gelu(v); });
  return x;
}

Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& x, const Tensor& scale, const Tensor& offset,
                                ForwardObserver* obs) {
  const Eigen::RowVectorXd g = as_row(scale), o = as_row(offset);
  Eigen::MatrixXd y(x.rows(), x.cols());
  Eigen::RowVectorXd normalized(x.cols());
  for (Eigen::Index p = 0; p < x.rows(); ++p) {
    const double mean = x.row(p).mean();
    const double var = (x.row(p).array() - mean).square().mean();
    normalized = (x.row(p).array() - mean) / std::sqrt(var + kLayerNormEps);
    if (obs) obs->on_layer_norm({normalized.data(), static_cast<std::size_t>(normalized.size())}, var);
    y.row(p) = normalized.cwiseProduct(g) + o;
  }
  return y;
}

void check_finite(const Eigen::MatrixXd& m, const std::string& where) {
  if (!m.allFinite()) throw Error("non-finite activation in " + where);
}

}  // namespace

// Same-padded (1,3,3) cross-correlation over (band, component).
Volume conv_same_133(const Volume& in, const Tensor& weight, const Tensor& bias) {
  const int c_out = static_cast<int>(weight.shape.at(0));
  const int c_in = static_cast<int>(weight.shape.at(1));
  if (c_in != in.c)
    throw ValidationError("conv expects " + std::to_string(c_in) + " input channels, got " +
                          std::to_string(in.c));
  Volume out(c_out, in.t, in.b, in.d);
  parallel_for(static_cast<std::size_t>(in.t), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    for (int co = 0; co < c_out; ++co) {
      for (int bi = 0; bi < in.b; ++bi)
        for (int di = 0; di < in.d; ++di) out.at(co, t, bi, di) = bias.data[co];
      for (int ci = 0; ci < c_in; ++ci) {
        const float* k = &weight.data[(static_cast<std::size_t>(co) * c_in + ci) * 9];
        for (int kb = 0; kb < 3; ++kb) {
          for (int kd = 0; kd < 3; ++kd) {
            const double wv = k[kb * 3 + kd];
            if (wv == 0.0) continue;
            const int b_lo = std::max(0, 1 - kb), b_hi = std::min(in.b, in.b + 1 - kb);
            const int d_lo = std::max(0, 1 - kd), d_hi = std::min(in.d, in.d + 1 - kd);
            for (int bi = b_lo; bi < b_hi; ++bi)
              for (int di = d_lo; di < d_hi; ++di)
                out.at(co, t, bi, di) += wv * in.at(ci, t, bi + kb - 1, di + kd - 1);
          }
        }
      }
    }
  });
  return out;
}

void channel_layer_norm(Volume& v, const Tensor& scale, const Tensor& offset, ForwardObserver* obs) {
  std::vector<double> x(static_cast<std::size_t>(v.c));
  for (int t = 0; t < v.t; ++t)
    for (int b = 0; b < v.b; ++b)
      for (int d = 0; d < v.d; ++d) {
        double mean = 0.0;
        for (int c = 0; c < v.c; ++c) mean += (x[c] = v.at(c, t, b, d));
        mean /= v.c;
        double var = 0.0;
        for (int c = 0; c < v.c; ++c) var += (x[c] - mean) * (x[c] - mean);
        var /= v.c;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int c = 0; c < v.c; ++c) x[c] = (x[c] - mean) * inv;
        if (obs) obs->on_layer_norm(x, var);
        for (int c = 0; c < v.c; ++c) v.at(c, t, b, d) = scale.data[c] * x[c] + offset.data[c];
      }
}

// 3x3x3 window, stride 3, ceil mode; out-of-range cells count as -inf.
Volume max_pool_333(const Volume& in) {
  constexpr int k = EncoderConfig::kPool;
  Volume out(in.c, ceil_div(in.t, k), ceil_div(in.b, k), ceil_div(in.d, k));
  for (int c = 0; c < in.c; ++c)
    for (int t = 0; t < out.t; ++t)
      for (int b = 0; b < out.b; ++b)
        for (int d = 0; d < out.d; ++d) {
          double m = -std::numeric_limits<double>::infinity();
          for (int it = t * k; it < std::min(in.t, t * k + k); ++it)
            for (int ib = b * k; ib < std::min(in.b, b * k + k); ++ib)
              for (int id = d * k; id < std::min(in.d, d * k + k); ++id) m = std::max(m, in.at(c, it, ib, id));
          out.at(c, t, b, d) = m;
        }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Volume conv_block_forward(const Volume& z, const ConvBlockWeights& w, ForwardObserver* obs) {
  Volume a = conv_same_133(z, w.conv_a_weight, w.conv_a_bias);
  for (double& v : a.data) v = std::max(v, 0.0);
  Volume b = conv_same_133(a, w.conv_b_weight, w.conv_b_bias);
  channel_layer_norm(b, w.ln_scale, w.ln_offset, obs);
  return max_pool_333(b);
}

Eigen::MatrixXd patchify(const Volume& z, const EncoderWeights& w, const EncoderConfig& cfg) {
  constexpr int ps = EncoderConfig::kPatch;
  const int rows = z.t;
  const int cols = z.c * z.b * z.d;
  if (rows == 0 || cols == 0) throw ValidationError("cannot patchify an empty feature grid");
  const int prow = ceil_div(rows, ps), pcol = ceil_div(cols, ps);
  const int n_patches = prow * pcol;
  if (n_patches > cfg.max_patches)
    throw ValidationError("input yields " + std::to_string(n_patches) +
                          " patches but the positional table holds " + std::to_string(cfg.max_patches) +
                          "; raise max_patches or shorten the clip");

  // vec(patch) rows, zero where the grid was padded.
  Eigen::MatrixXd vecs = Eigen::MatrixXd::Zero(n_patches, ps * ps);
  for (int t = 0; t < rows; ++t)
    for (int c = 0; c < z.c; ++c)
      for (int b = 0; b < z.b; ++b)
        for (int d = 0; d < z.d; ++d) {
          const int col = (c * z.b + b) * z.d + d;
          const int p = (t / ps) * pcol + col / ps;
          vecs(p, (t % ps) * ps + col % ps) = z.at(c, t, b, d);
        }
  Eigen::MatrixXd e = linear(vecs, w.patch_weight, w.patch_bias);
  e += as_matrix(w.pos_embed).topRows(n_patches);
  return e;
}

Eigen::MatrixXd transformer_forward(const Eigen::MatrixXd& tokens, const EncoderWeights& w,
                                    const EncoderConfig& cfg, ForwardObserver* obs) {
  if (tokens.rows() < 1) throw ValidationError("transformer needs at least one token");
  if (tokens.cols() != cfg.embed_dim)
    throw ValidationError("token width " + std::to_string(tokens.cols()) + " != embed_dim " +
                          std::to_string(cfg.embed_dim));
  const int heads = cfg.n_heads;
  const int dh = cfg.embed_dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Eigen::MatrixXd h = tokens;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& y = w.layers.at(l);
    const Eigen::MatrixXd x = layer_norm_rows(h, y.ln_scale, y.ln_offset, obs);
    const Eigen::MatrixXd q = linear(x, y.q_weight, y.q_bias);
    const Eigen::MatrixXd k = linear(x, y.k_weight, y.k_bias);
    const Eigen::MatrixXd v = linear(x, y.v_weight, y.v_bias);
    Eigen::MatrixXd concat(h.rows(), cfg.embed_dim);
    for (int hd = 0; hd < heads; ++hd) {
      const auto qh = q.middleCols(hd * dh, dh);
      const auto kh = k.middleCols(hd * dh, dh);
      Eigen::MatrixXd probs = (qh * kh.transpose()) * scale;
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const double mx = probs.row(r).maxCoeff();
        probs.row(r) = (probs.row(r).array() - mx).exp();
        probs.row(r) /= probs.row(r).sum();
      }
      if (obs) obs->on_attention(l, hd, probs);
      concat.middleCols(hd * dh, dh) = probs * v.middleCols(hd * dh, dh);
    }
    const Eigen::MatrixXd residual = linear(concat, y.o_weight, y.o_bias) + h;
    // FFN wraps the residual sum; there is no second skip connection.
    h = linear(gelu_all(linear(residual, y.fc1_weight, y.fc1_bias)), y.fc2_weight, y.fc2_bias);
    check_finite(h, "transformer layer " + std::to_string(l));
  }
  return h;
}

TokenSequence adapter_forward(const Eigen::MatrixXd& tokens, const EncoderWeights& w,
                              const EncoderConfig& cfg) {
  if (tokens.cols() != cfg.embed_dim)
    throw ValidationError("adapter expects width " + std::to_string(cfg.embed_dim));
  TokenSequence out;
  out.tokens = linear(gelu_all(linear(tokens, w.adapter_fc1_weight, w.adapter_fc1_bias)),
                      w.adapter_fc2_weight, w.adapter_fc2_bias);
  check_finite(out.tokens, "adapter");
  return out;
}

EncoderShape encoder_shape(const EncoderConfig& cfg, int n_frames, int n_bands) {
  EncoderShape s;
  int t = n_frames, b = n_bands, d = kSscvDim;
  for (int k = 0; k < cfg.conv_blocks(); ++k) {
    t = ceil_div(t, EncoderConfig::kPool);
    b = ceil_div(b, EncoderConfig::kPool);
    d = ceil_div(d, EncoderConfig::kPool);
    s.block_dims.push_back({t, b, d});
  }
  s.grid_rows = t;
  s.grid_cols = cfg.conv_channels.back() * b * d;
  s.patch_rows = ceil_div(s.grid_rows, EncoderConfig::kPatch);
  s.patch_cols = ceil_div(s.grid_cols, EncoderConfig::kPatch);
  s.n_patches = s.patch_rows * s.patch_cols;
  return s;
}

TokenSequence encode(const SscvTensor& sscv, const EncoderWeights& w, const EncoderConfig& cfg,
                     ForwardObserver* obs) {
  cfg.validate();
  if (w.blocks.size() != cfg.conv_channels.size() || static_cast<int>(w.layers.size()) != cfg.n_layers)
    throw ValidationError("encoder weights were built for a different config");
  Volume z(1, static_cast<int>(sscv.n_frames()), static_cast<int>(sscv.n_bands()), kSscvDim);
  z.data = sscv.values();
  for (const auto& block : w.blocks) z = conv_block_forward(z, block, obs);
  const Eigen::MatrixXd tokens = patchify(z, w, cfg);
  return adapter_forward(transformer_forward(tokens, w, cfg, obs), w, cfg);
}

}  // namespace spur

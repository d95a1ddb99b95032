#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <type_traits>

#include "spur/encoder.hpp"

namespace spur {
namespace {

constexpr char kMagic[8] = {'S', 'P', 'U', 'R', 'W', 'G', 'T', '1'};
constexpr std::uint32_t kFileVersion = 1;

// The one place that fixes tensor names and file order.
template <class Weights>
auto slots_of(Weights& w) {
  using T = std::conditional_t<std::is_const_v<Weights>, const Tensor, Tensor>;
  std::vector<std::pair<std::string, T*>> out;
  for (std::size_t k = 0; k < w.blocks.size(); ++k) {
    auto& b = w.blocks[k];
    const std::string p = "conv" + std::to_string(k) + ".";
    out.emplace_back(p + "a.weight", &b.conv_a_weight);
    out.emplace_back(p + "a.bias", &b.conv_a_bias);
    out.emplace_back(p + "b.weight", &b.conv_b_weight);
    out.emplace_back(p + "b.bias", &b.conv_b_bias);
    out.emplace_back(p + "norm.scale", &b.ln_scale);
    out.emplace_back(p + "norm.offset", &b.ln_offset);
  }
  out.emplace_back("patch.weight", &w.patch_weight);
  out.emplace_back("patch.bias", &w.patch_bias);
  out.emplace_back("pos_embed", &w.pos_embed);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& y = w.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    out.emplace_back(p + "norm.scale", &y.ln_scale);
    out.emplace_back(p + "norm.offset", &y.ln_offset);
    out.emplace_back(p + "attn.q.weight", &y.q_weight);
    out.emplace_back(p + "attn.q.bias", &y.q_bias);
    out.emplace_back(p + "attn.k.weight", &y.k_weight);
    out.emplace_back(p + "attn.k.bias", &y.k_bias);
    out.emplace_back(p + "attn.v.weight", &y.v_weight);
    out.emplace_back(p + "attn.v.bias", &y.v_bias);
    out.emplace_back(p + "attn.o.weight", &y.o_weight);
    out.emplace_back(p + "attn.o.bias", &y.o_bias);
    out.emplace_back(p + "ffn.fc1.weight", &y.fc1_weight);
    out.emplace_back(p + "ffn.fc1.bias", &y.fc1_bias);
    out.emplace_back(p + "ffn.fc2.weight", &y.fc2_weight);
    out.emplace_back(p + "ffn.fc2.bias", &y.fc2_bias);
  }
  out.emplace_back("adapter.fc1.weight", &w.adapter_fc1_weight);
  out.emplace_back("adapter.fc1.bias", &w.adapter_fc1_bias);
  out.emplace_back("adapter.fc2.weight", &w.adapter_fc2_weight);
  out.emplace_back("adapter.fc2.bias", &w.adapter_fc2_bias);
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void put_bytes(std::vector<unsigned char>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  out.insert(out.end(), b, b + n);
}
template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  template <class T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n)
      throw WeightsFileError(WeightsFileError::Kind::Truncated,
                             name_ + ": truncated while reading " + what);
  }
  const std::vector<unsigned char>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void EncoderConfig::validate() const {
  if (conv_channels.empty()) throw ValidationError("encoder needs at least one conv block");
  for (int c : conv_channels)
    if (c < 1) throw ValidationError("conv_channels entries must be >= 1");
  if (embed_dim < 1 || n_layers < 1 || n_heads < 1 || ffn_mult < 1 || adapter_out_dim < 1 ||
      max_patches < 1)
    throw ValidationError("encoder counts must all be >= 1");
  if (embed_dim % n_heads != 0)
    throw ValidationError("embed_dim (" + std::to_string(embed_dim) +
                          ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
}

Tensor Tensor::zeros(std::vector<std::uint64_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(t.numel(), 0.0f);
  return t;
}

std::uint64_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

EncoderWeights EncoderWeights::shaped(const EncoderConfig& cfg) {
  cfg.validate();
  using u = std::uint64_t;
  const u d = static_cast<u>(cfg.embed_dim);
  const u ffn = static_cast<u>(cfg.ffn_dim());
  const u out = static_cast<u>(cfg.adapter_out_dim);
  const u patch = EncoderConfig::kPatch * EncoderConfig::kPatch;
  EncoderWeights w;
  u c_in = 1;
  for (int c : cfg.conv_channels) {
    const u c_out = static_cast<u>(c);
    ConvBlockWeights b;
    b.conv_a_weight = Tensor::zeros({c_out, c_in, 1, 3, 3});
    b.conv_a_bias = Tensor::zeros({c_out});
    b.conv_b_weight = Tensor::zeros({c_out, c_out, 1, 3, 3});
    b.conv_b_bias = Tensor::zeros({c_out});
    b.ln_scale = Tensor::zeros({c_out});
    b.ln_offset = Tensor::zeros({c_out});
    w.blocks.push_back(std::move(b));
    c_in = c_out;
  }
  w.patch_weight = Tensor::zeros({d, patch});
  w.patch_bias = Tensor::zeros({d});
  w.pos_embed = Tensor::zeros({static_cast<u>(cfg.max_patches), d});
  for (int l = 0; l < cfg.n_layers; ++l) {
    TransformerLayerWeights y;
    y.ln_scale = Tensor::zeros({d});
    y.ln_offset = Tensor::zeros({d});
    for (Tensor* m : {&y.q_weight, &y.k_weight, &y.v_weight, &y.o_weight}) *m = Tensor::zeros({d, d});
    for (Tensor* b : {&y.q_bias, &y.k_bias, &y.v_bias, &y.o_bias}) *b = Tensor::zeros({d});
    y.fc1_weight = Tensor::zeros({ffn, d});
    y.fc1_bias = Tensor::zeros({ffn});
    y.fc2_weight = Tensor::zeros({d, ffn});
    y.fc2_bias = Tensor::zeros({d});
    w.layers.push_back(std::move(y));
  }
  w.adapter_fc1_weight = Tensor::zeros({out, d});
  w.adapter_fc1_bias = Tensor::zeros({out});
  w.adapter_fc2_weight = Tensor::zeros({out, out});
  w.adapter_fc2_bias = Tensor::zeros({out});
  return w;
}

std::vector<NamedTensor> EncoderWeights::to_named() const {
  std::vector<NamedTensor> out;
  for (auto& [name, t] : slots_of(*this)) out.push_back({name, *t});
  return out;
}

EncoderWeights EncoderWeights::from_named(const EncoderConfig& cfg,
                                          const std::vector<NamedTensor>& tensors) {
  EncoderWeights w = shaped(cfg);
  auto slots = slots_of(w);
  std::ostringstream diff;
  int problems = 0;
  if (tensors.size() != slots.size()) {
    diff << "\n  tensor count: file has " << tensors.size() << ", config expects " << slots.size();
    ++problems;
  }
  const std::size_t n = std::min(tensors.size(), slots.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [name, slot] = slots[i];
    const auto& got = tensors[i];
    if (got.name != name) {
      diff << "\n  #" << i << ": file has '" << got.name << "', config expects '" << name << "'";
      ++problems;
    } else if (got.tensor.shape != slot->shape) {
      diff << "\n  " << name << ": file " << got.tensor.shape_string() << ", config "
           << slot->shape_string();
      ++problems;
    } else {
      *slot = got.tensor;
    }
  }
  if (problems)
    throw ValidationError("weights do not match encoder config (" + std::to_string(problems) +
                          " difference(s)):" + diff.str());
  for (const auto& [name, slot] : slots)
    for (float v : slot->data)
      if (!std::isfinite(v)) throw ValidationError("weights tensor '" + name + "' holds a non-finite value");
  return w;
}

std::uint64_t init_fan_in(const std::string& name, const Tensor& t) {
  if (name == "pos_embed") return t.shape.at(1);
  if (!ends_with(name, ".weight")) return 0;
  // [out, in, ...kernel] -> in * prod(kernel)
  std::uint64_t fan = 1;
  for (std::size_t i = 1; i < t.shape.size(); ++i) fan *= t.shape[i];
  return fan;
}

EncoderWeights init_weights(const EncoderConfig& cfg, std::uint64_t seed) {
  EncoderWeights w = EncoderWeights::shaped(cfg);
  Xoshiro256 rng(seed);
  for (auto& [name, t] : slots_of(w)) {
    if (ends_with(name, "norm.scale")) {
      std::fill(t->data.begin(), t->data.end(), 1.0f);
      continue;
    }
    const std::uint64_t fan = init_fan_in(name, *t);
    if (fan == 0) continue;  // biases and offsets stay zero
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
    const float fbound = static_cast<float>(bound);
    for (float& v : t->data) {
      float x = static_cast<float>(rng.uniform(-bound, bound));
      // keep |x| strictly inside the bound after rounding to float
      while (std::abs(x) >= fbound || std::abs(static_cast<double>(x)) >= bound)
        x = std::nextafter(x, 0.0f);
      v = x;
    }
  }
  return w;
}

void save_weights(const EncoderWeights& w, const std::filesystem::path& path) {
  const auto named = w.to_named();
  std::vector<unsigned char> out;
  put_bytes(out, kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kFileVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto dim : t.shape) put_le<std::uint64_t>(out, dim);
    for (float v : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<NamedTensor> read_weight_tensors(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weights file '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                         std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw WeightsFileError(WeightsFileError::Kind::BadMagic, name + ": not a SPURWGT1 weights file");
  Reader r(bytes, name);
  r.skip(sizeof kMagic);
  const auto version = r.le<std::uint32_t>("version");
  if (version != kFileVersion)
    throw WeightsFileError(WeightsFileError::Kind::BadVersion,
                           name + ": unsupported weights version " + std::to_string(version));
  const auto count = r.le<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    const auto len = r.le<std::uint16_t>("name length");
    nt.name = r.str(len, "tensor name");
    const auto ndim = r.le<std::uint8_t>("ndim");
    nt.tensor.shape.resize(ndim);
    for (auto& dim : nt.tensor.shape) dim = r.le<std::uint64_t>("dims");
    const std::uint64_t numel = nt.tensor.numel();
    if (numel > r.remaining() / 4)
      throw WeightsFileError(WeightsFileError::Kind::Integrity,
                             name + ": tensor '" + nt.name + "' declares shape " +
                                 nt.tensor.shape_string() + " (" + std::to_string(numel * 4) +
                                 " bytes) but only " + std::to_string(r.remaining()) +
                                 " bytes remain");
    nt.tensor.data.resize(numel);
    for (auto& v : nt.tensor.data) v = std::bit_cast<float>(r.le<std::uint32_t>("payload"));
    out.push_back(std::move(nt));
  }
  if (r.remaining() != 0)
    throw WeightsFileError(WeightsFileError::Kind::Integrity,
                           name + ": " + std::to_string(r.remaining()) +
                               " trailing bytes after the last declared tensor");
  return out;
}

EncoderWeights load_weights(const std::filesystem::path& path, const EncoderConfig& cfg) {
  return EncoderWeights::from_named(cfg, read_weight_tensors(path));
}

}  // namespace spur

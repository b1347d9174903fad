#include "polytx/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "binio.hpp"
#include "polytx/error.hpp"

namespace polytx {

using ad::Shape;
using ad::Tensor;

namespace {

constexpr double kInitStd = 0.02;
constexpr char kCkptMagic[8] = {'P', 'T', 'X', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng) {
  for (auto& v : t.data()) v = static_cast<T>(kInitStd * rng.normal());
}

template <typename T>
Tensor<T> param(Shape shape, T value = T(0)) {
  return Tensor<T>::full(std::move(shape), value, true);
}

bool is_weight(const std::string& name) {
  return name.ends_with(".weight") || name == "embeddings.token" || name == "embeddings.position";
}

bool is_head(const std::string& name) { return name.starts_with("regression."); }

}  // namespace

void EncoderConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::BadConfig, "encoder config: " + msg); };
  if (num_layers == 0 || num_heads == 0 || hidden == 0 || ffn == 0 || max_len == 0 || vocab_size == 0 ||
      num_properties == 0) {
    bad("all dimensions must be positive");
  }
  if (hidden % num_heads != 0) bad("hidden " + std::to_string(hidden) + " not divisible by heads " + std::to_string(num_heads));
  if (max_len < 3) bad("max_len must be at least 3");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) bad("dropout_p must be in [0,1)");
  if (!(head_dropout_p >= 0.0 && head_dropout_p < 1.0)) bad("head_dropout_p must be in [0,1)");
}

EncoderConfig desk_preset(std::size_t vocab_size, std::size_t num_properties) {
  EncoderConfig c;
  c.num_layers = 4;
  c.num_heads = 4;
  c.hidden = 128;
  c.ffn = 512;
  c.max_len = 128;
  c.vocab_size = vocab_size;
  c.num_properties = num_properties;
  return c;
}

EncoderConfig paper_preset(std::size_t vocab_size, std::size_t num_properties) {
  EncoderConfig c;
  c.num_layers = 12;
  c.num_heads = 12;
  c.hidden = 768;
  c.ffn = 3072;
  c.max_len = 512;
  c.vocab_size = vocab_size;
  c.num_properties = num_properties;
  return c;
}

EncoderConfig preset_by_name(std::string_view name, std::size_t vocab_size, std::size_t num_properties) {
  if (name == "desk") return desk_preset(vocab_size, num_properties);
  if (name == "paper") return paper_preset(vocab_size, num_properties);
  fail(ErrorCode::BadConfig, "unknown encoder preset '" + std::string(name) + "' (expected desk|paper)");
}

std::size_t parameter_count(const EncoderConfig& c) {
  const std::size_t h = c.hidden;
  const std::size_t embeddings = c.vocab_size * h + c.max_len * h + 2 * h;
  const std::size_t attention = 4 * (h * h + h) + 2 * h;
  const std::size_t feed_forward = h * c.ffn + c.ffn + c.ffn * h + h + 2 * h;
  const std::size_t mlm = h * c.vocab_size + c.vocab_size;
  const std::size_t head = h * c.num_properties + c.num_properties;
  return embeddings + c.num_layers * (attention + feed_forward) + mlm + head;
}

template <typename T>
std::vector<NamedParam<T>> EncoderModel<T>::parameters() {
  std::vector<NamedParam<T>> out;
  out.push_back({"embeddings.token", &token_embedding});
  out.push_back({"embeddings.position", &position_embedding});
  out.push_back({"embeddings.ln.gain", &embedding_ln_g});
  out.push_back({"embeddings.ln.shift", &embedding_ln_b});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layer." + std::to_string(i) + ".";
    out.push_back({p + "attn.q.weight", &l.q_w});
    out.push_back({p + "attn.q.bias", &l.q_b});
    out.push_back({p + "attn.k.weight", &l.k_w});
    out.push_back({p + "attn.k.bias", &l.k_b});
    out.push_back({p + "attn.v.weight", &l.v_w});
    out.push_back({p + "attn.v.bias", &l.v_b});
    out.push_back({p + "attn.out.weight", &l.o_w});
    out.push_back({p + "attn.out.bias", &l.o_b});
    out.push_back({p + "attn.ln.gain", &l.attn_ln_g});
    out.push_back({p + "attn.ln.shift", &l.attn_ln_b});
    out.push_back({p + "ffn.in.weight", &l.ffn_in_w});
    out.push_back({p + "ffn.in.bias", &l.ffn_in_b});
    out.push_back({p + "ffn.out.weight", &l.ffn_out_w});
    out.push_back({p + "ffn.out.bias", &l.ffn_out_b});
    out.push_back({p + "ffn.ln.gain", &l.ffn_ln_g});
    out.push_back({p + "ffn.ln.shift", &l.ffn_ln_b});
  }
  out.push_back({"mlm.weight", &mlm_w});
  out.push_back({"mlm.bias", &mlm_b});
  out.push_back({"regression.weight", &reg_w});
  out.push_back({"regression.bias", &reg_b});
  return out;
}

template <typename T>
std::vector<ConstNamedParam<T>> EncoderModel<T>::parameters() const {
  auto mut = const_cast<EncoderModel*>(this)->parameters();
  std::vector<ConstNamedParam<T>> out;
  out.reserve(mut.size());
  for (auto& p : mut) out.push_back({std::move(p.name), p.tensor});
  return out;
}

template <typename T>
std::size_t EncoderModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->numel();
  return n;
}

template <typename T>
void EncoderModel<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

template <typename T>
EncoderModel<T> EncoderModel<T>::clone() const {
  EncoderModel<T> copy = *this;  // shares nodes; replace each below
  for (auto& p : copy.parameters()) *p.tensor = p.tensor->clone();
  return copy;
}

template <typename T>
EncoderModel<T> allocate_encoder(const EncoderConfig& c) {
  c.validate();
  EncoderModel<T> m;
  m.config = c;
  const std::size_t h = c.hidden;
  m.token_embedding = param<T>({c.vocab_size, h});
  m.position_embedding = param<T>({c.max_len, h});
  m.embedding_ln_g = param<T>({h}, T(1));
  m.embedding_ln_b = param<T>({h});
  m.layers.resize(c.num_layers);
  for (auto& l : m.layers) {
    l.q_w = param<T>({h, h});
    l.q_b = param<T>({h});
    l.k_w = param<T>({h, h});
    l.k_b = param<T>({h});
    l.v_w = param<T>({h, h});
    l.v_b = param<T>({h});
    l.o_w = param<T>({h, h});
    l.o_b = param<T>({h});
    l.attn_ln_g = param<T>({h}, T(1));
    l.attn_ln_b = param<T>({h});
    l.ffn_in_w = param<T>({h, c.ffn});
    l.ffn_in_b = param<T>({c.ffn});
    l.ffn_out_w = param<T>({c.ffn, h});
    l.ffn_out_b = param<T>({h});
    l.ffn_ln_g = param<T>({h}, T(1));
    l.ffn_ln_b = param<T>({h});
  }
  m.mlm_w = param<T>({h, c.vocab_size});
  m.mlm_b = param<T>({c.vocab_size});
  m.reg_w = param<T>({h, c.num_properties});
  m.reg_b = param<T>({c.num_properties});
  return m;
}

template <typename T>
EncoderModel<T> init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  auto m = allocate_encoder<T>(config);
  Rng trunk(derive_seed(seed, 1));
  for (auto& p : m.parameters()) {
    if (is_weight(p.name) && !is_head(p.name)) fill_normal(*p.tensor, trunk);
  }
  reset_regression_head(m, config.num_properties, seed);
  return m;
}

template <typename T>
void reset_regression_head(EncoderModel<T>& model, std::size_t num_properties, std::uint64_t seed) {
  if (num_properties == 0) fail(ErrorCode::BadConfig, "regression head needs at least one output");
  model.config.num_properties = num_properties;
  model.reg_w = param<T>({model.config.hidden, num_properties});
  model.reg_b = param<T>({num_properties});
  Rng head(derive_seed(seed, 2));
  fill_normal(model.reg_w, head);
}

std::vector<TokenSequence> trim_batch(std::span<const TokenSequence> batch) {
  std::size_t longest = 1;
  for (const auto& s : batch) longest = std::max(longest, s.length);
  std::vector<TokenSequence> out;
  out.reserve(batch.size());
  for (const auto& s : batch) {
    TokenSequence t;
    const std::size_t n = std::min(longest, s.ids.size());
    t.ids.assign(s.ids.begin(), s.ids.begin() + static_cast<std::ptrdiff_t>(n));
    t.attention_mask.assign(s.attention_mask.begin(), s.attention_mask.begin() + static_cast<std::ptrdiff_t>(n));
    t.length = s.length;
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

// (B, L, H) -> (B*heads, L, d)
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t batch, std::size_t len, std::size_t heads, std::size_t d) {
  return ad::reshape(ad::transpose(ad::reshape(x, {batch, len, heads, d}), 1, 2), {batch * heads, len, d});
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return ad::add(ad::matmul(x, w), b);
}

}  // namespace

template <typename T>
Tensor<T> encode(const EncoderModel<T>& model, std::span<const TokenSequence> batch, bool train, Rng& rng,
                 EncodeTrace<T>* trace) {
  const auto& c = model.config;
  if (batch.empty()) fail(ErrorCode::ShapeMismatch, "encode: empty batch");
  const std::size_t B = batch.size();
  const std::size_t L = batch[0].ids.size();
  if (L == 0 || L > c.max_len) {
    fail(ErrorCode::ShapeMismatch, "encode: sequence length " + std::to_string(L) + " outside [1, " + std::to_string(c.max_len) + "]");
  }
  std::vector<int> ids;
  std::vector<int> positions;
  ids.reserve(B * L);
  positions.reserve(B * L);
  for (const auto& s : batch) {
    if (s.ids.size() != L || s.attention_mask.size() != L) {
      fail(ErrorCode::ShapeMismatch, "encode: batch mixes sequence lengths " + std::to_string(L) + " and " + std::to_string(s.ids.size()));
    }
    for (std::size_t i = 0; i < L; ++i) {
      ids.push_back(s.ids[i]);
      positions.push_back(static_cast<int>(i));
    }
  }
  const std::size_t H = c.hidden;
  const std::size_t nh = c.num_heads;
  const std::size_t d = c.head_dim();

  // Additive key mask: 0 for real tokens, -inf for [PAD].
  std::vector<T> mask_values(B * nh * L * L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < nh; ++h) {
      T* block = mask_values.data() + (b * nh + h) * L * L;
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < L; ++j) {
          block[i * L + j] = batch[b].attention_mask[j] ? T(0) : -std::numeric_limits<T>::infinity();
        }
      }
    }
  }
  const auto key_mask = Tensor<T>::from({B * nh, L, L}, std::move(mask_values));
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  auto x = ad::add(ad::embedding_lookup(model.token_embedding, ids), ad::embedding_lookup(model.position_embedding, positions));
  x = ad::layer_norm(x, model.embedding_ln_g, model.embedding_ln_b);
  x = ad::dropout(x, c.dropout_p, train, rng);
  x = ad::reshape(x, {B, L, H});

  for (const auto& layer : model.layers) {
    const auto q = split_heads(linear(x, layer.q_w, layer.q_b), B, L, nh, d);
    const auto k = split_heads(linear(x, layer.k_w, layer.k_b), B, L, nh, d);
    const auto v = split_heads(linear(x, layer.v_w, layer.v_b), B, L, nh, d);
    auto scores = ad::scale(ad::matmul(q, ad::transpose(k, 1, 2)), inv_sqrt_d);
    auto probs = ad::softmax(ad::add(scores, key_mask));
    if (trace) trace->attention.push_back(probs);
    probs = ad::dropout(probs, c.dropout_p, train, rng);
    auto ctx = ad::matmul(probs, v);
    ctx = ad::reshape(ad::transpose(ad::reshape(ctx, {B, nh, L, d}), 1, 2), {B, L, H});
    auto attn = ad::dropout(linear(ctx, layer.o_w, layer.o_b), c.dropout_p, train, rng);
    x = ad::layer_norm(ad::add(x, attn), layer.attn_ln_g, layer.attn_ln_b);

    auto ff = ad::gelu(linear(x, layer.ffn_in_w, layer.ffn_in_b));
    ff = ad::dropout(linear(ff, layer.ffn_out_w, layer.ffn_out_b), c.dropout_p, train, rng);
    x = ad::layer_norm(ad::add(x, ff), layer.ffn_ln_g, layer.ffn_ln_b);
  }
  return x;
}

template <typename T>
Tensor<T> mlm_logits(const EncoderModel<T>& model, const Tensor<T>& hidden) {
  if (hidden.rank() != 3 || hidden.dim(2) != model.config.hidden) {
    fail(ErrorCode::ShapeMismatch, "mlm_logits: hidden states " + ad::shape_str(hidden.shape()) + " do not match hidden size " +
                                       std::to_string(model.config.hidden));
  }
  return linear(hidden, model.mlm_w, model.mlm_b);
}

template <typename T>
Tensor<T> regress(const EncoderModel<T>& model, const Tensor<T>& hidden, bool train, Rng& rng) {
  if (hidden.rank() != 3 || hidden.dim(2) != model.config.hidden) {
    fail(ErrorCode::ShapeMismatch, "regress: hidden states " + ad::shape_str(hidden.shape()) + " do not match hidden size " +
                                       std::to_string(model.config.hidden));
  }
  const std::size_t B = hidden.dim(0);
  const std::size_t L = hidden.dim(1);
  std::vector<int> cls_rows(B);
  for (std::size_t b = 0; b < B; ++b) cls_rows[b] = static_cast<int>(b * L);
  auto cls = ad::embedding_lookup(ad::reshape(hidden, {B * L, model.config.hidden}), cls_rows);
  cls = ad::dropout(cls, model.config.head_dropout_p, train, rng);
  return linear(cls, model.reg_w, model.reg_b);
}

// ---- checkpoints -----------------------------------------------------------

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const EncoderModel<T>& model, const CheckpointMeta& meta,
                     std::span<const NamedArray> extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write checkpoint " + path.string());
  const auto& c = model.config;
  out.write(kCkptMagic, 8);
  binio::put_u32(out, kCkptVersion);
  for (std::size_t v : {c.num_layers, c.num_heads, c.hidden, c.ffn, c.max_len, c.vocab_size, c.num_properties}) {
    binio::put_u32(out, static_cast<std::uint32_t>(v));
  }
  binio::put_f32(out, static_cast<float>(c.dropout_p));
  binio::put_f32(out, static_cast<float>(c.head_dropout_p));
  binio::put_u64(out, meta.step);
  binio::put_u64(out, meta.epoch);
  binio::put_u64(out, meta.seed);
  const auto params = model.parameters();
  binio::put_u32(out, static_cast<std::uint32_t>(params.size() + extra.size()));
  auto put_tensor = [&](const std::string& name, const Shape& shape, auto values) {
    binio::put_str(out, name);
    binio::put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto dim : shape) binio::put_u32(out, static_cast<std::uint32_t>(dim));
    for (auto v : values) binio::put_f32(out, static_cast<float>(v));
  };
  for (const auto& p : params) put_tensor(p.name, p.tensor->shape(), p.tensor->data());
  for (const auto& e : extra) put_tensor(e.name, e.shape, std::span<const float>(e.values));
  if (!out) fail(ErrorCode::IoError, "failed writing checkpoint " + path.string());
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read checkpoint " + path.string());
  char magic[8];
  binio::get_exact(in, magic, 8, "checkpoint magic");
  if (!std::equal(magic, magic + 8, kCkptMagic)) fail(ErrorCode::BadFormat, path.string() + " is not a checkpoint");
  const auto version = binio::get_u32(in, "checkpoint version");
  if (version != kCkptVersion) fail(ErrorCode::BadFormat, "unsupported checkpoint version " + std::to_string(version));
  EncoderConfig c;
  c.num_layers = binio::get_u32(in, "config");
  c.num_heads = binio::get_u32(in, "config");
  c.hidden = binio::get_u32(in, "config");
  c.ffn = binio::get_u32(in, "config");
  c.max_len = binio::get_u32(in, "config");
  c.vocab_size = binio::get_u32(in, "config");
  c.num_properties = binio::get_u32(in, "config");
  // Stored as f32; snap back to the decimal the user configured.
  auto prob = [&] { return std::round(static_cast<double>(binio::get_f32(in, "config")) * 1e6) / 1e6; };
  c.dropout_p = prob();
  c.head_dropout_p = prob();
  c.validate();
  LoadedCheckpoint<T> loaded{allocate_encoder<T>(c), {}, {}};
  loaded.meta.step = binio::get_u64(in, "meta");
  loaded.meta.epoch = binio::get_u64(in, "meta");
  loaded.meta.seed = binio::get_u64(in, "meta");

  std::map<std::string, Tensor<T>*> by_name;
  for (auto& p : loaded.model.parameters()) by_name.emplace(p.name, p.tensor);
  std::map<std::string, bool> seen;
  const auto count = binio::get_u32(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray arr;
    arr.name = binio::get_str(in, "tensor name");
    const auto rank = binio::get_u32(in, "tensor rank");
    if (rank == 0 || rank > 8) fail(ErrorCode::BadFormat, "tensor '" + arr.name + "' has implausible rank");
    for (std::uint32_t r = 0; r < rank; ++r) arr.shape.push_back(binio::get_u32(in, "tensor dims"));
    const auto n = ad::numel(arr.shape);
    auto it = by_name.find(arr.name);
    if (it != by_name.end()) {
      if (arr.shape != it->second->shape()) {
        fail(ErrorCode::BadFormat, "checkpoint tensor '" + arr.name + "' has shape " + ad::shape_str(arr.shape) +
                                       ", config requires " + ad::shape_str(it->second->shape()));
      }
      auto dst = it->second->data();
      for (std::size_t k = 0; k < n; ++k) dst[k] = static_cast<T>(binio::get_f32(in, "tensor values"));
      seen[arr.name] = true;
    } else {
      if (n > (std::size_t{1} << 31)) fail(ErrorCode::BadFormat, "tensor '" + arr.name + "' is implausibly large");
      arr.values.resize(n);
      for (auto& v : arr.values) v = binio::get_f32(in, "tensor values");
      loaded.extra.push_back(std::move(arr));
    }
  }
  for (const auto& [name, _] : by_name) {
    if (!seen.contains(name)) fail(ErrorCode::BadFormat, "checkpoint is missing tensor '" + name + "'");
  }
  return loaded;
}

#define POLYTX_INSTANTIATE(T)                                                                                  \
  template class EncoderModel<T>;                                                                              \
  template EncoderModel<T> allocate_encoder<T>(const EncoderConfig&);                                          \
  template EncoderModel<T> init_encoder<T>(const EncoderConfig&, std::uint64_t);                               \
  template void reset_regression_head<T>(EncoderModel<T>&, std::size_t, std::uint64_t);                        \
  template Tensor<T> encode<T>(const EncoderModel<T>&, std::span<const TokenSequence>, bool, Rng&,             \
                               EncodeTrace<T>*);                                                               \
  template Tensor<T> mlm_logits<T>(const EncoderModel<T>&, const Tensor<T>&);                                  \
  template Tensor<T> regress<T>(const EncoderModel<T>&, const Tensor<T>&, bool, Rng&);                         \
  template void save_checkpoint<T>(const std::filesystem::path&, const EncoderModel<T>&, const CheckpointMeta&, \
                                   std::span<const NamedArray>);                                               \
  template LoadedCheckpoint<T> load_checkpoint<T>(const std::filesystem::path&);

POLYTX_INSTANTIATE(float)
POLYTX_INSTANTIATE(double)

#undef POLYTX_INSTANTIATE

}  // namespace polytx

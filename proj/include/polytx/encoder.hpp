#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polytx/tensor.hpp"
#include "polytx/tokenizer.hpp"

namespace polytx {

struct EncoderConfig {
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  std::size_t hidden = 128;
  std::size_t ffn = 512;
  std::size_t max_len = 128;
  std::size_t vocab_size = 0;
  double dropout_p = 0.1;
  double head_dropout_p = 0.1;
  std::size_t num_properties = 8;

  std::size_t head_dim() const { return hidden / num_heads; }
  /// Throws BadConfig when an invariant does not hold.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// 4 layers, 4 heads, hidden 128, ffn 512, max_len 128.
EncoderConfig desk_preset(std::size_t vocab_size, std::size_t num_properties = 8);
/// 12 layers, 12 heads, hidden 768, ffn 3072, max_len 512.
EncoderConfig paper_preset(std::size_t vocab_size, std::size_t num_properties = 8);
EncoderConfig preset_by_name(std::string_view name, std::size_t vocab_size, std::size_t num_properties = 8);

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const EncoderConfig& config);

template <typename T>
struct NamedParam {
  std::string name;
  ad::Tensor<T>* tensor;
};

template <typename T>
struct ConstNamedParam {
  std::string name;
  const ad::Tensor<T>* tensor;
};

template <typename T>
struct EncoderLayer {
  ad::Tensor<T> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  ad::Tensor<T> attn_ln_g, attn_ln_b;
  ad::Tensor<T> ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
  ad::Tensor<T> ffn_ln_g, ffn_ln_b;
};

/// Post-LN BERT encoder with an untied MLM projection and a [CLS]
/// regression head.
template <typename T>
class EncoderModel {
 public:
  EncoderConfig config;
  ad::Tensor<T> token_embedding;     // (vocab, hidden)
  ad::Tensor<T> position_embedding;  // (max_len, hidden)
  ad::Tensor<T> embedding_ln_g, embedding_ln_b;
  std::vector<EncoderLayer<T>> layers;
  ad::Tensor<T> mlm_w, mlm_b;  // (hidden, vocab), (vocab)
  ad::Tensor<T> reg_w, reg_b;  // (hidden, num_properties), (num_properties)

  /// Every parameter, in a fixed order with stable names.
  std::vector<NamedParam<T>> parameters();
  std::vector<ConstNamedParam<T>> parameters() const;

  std::size_t parameter_count() const;
  void zero_grad();
  EncoderModel clone() const;
};

/// Parameter tensors shaped for the config, zero-filled (gains one).
template <typename T>
EncoderModel<T> allocate_encoder(const EncoderConfig& config);

/// Weights ~ Normal(0, 0.02^2), biases zero, layer-norm gains one.
template <typename T>
EncoderModel<T> init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Replaces the regression head with a fresh Normal(0, 0.02^2) head of the
/// given width.
template <typename T>
void reset_regression_head(EncoderModel<T>& model, std::size_t num_properties, std::uint64_t seed);

/// Per-layer attention probabilities, (batch*heads, L, L) each.
template <typename T>
struct EncodeTrace {
  std::vector<ad::Tensor<T>> attention;
};

/// Runs the encoder on a batch of equal-length sequences (length <= max_len).
/// Returns hidden states of shape (B, L, hidden).
template <typename T>
ad::Tensor<T> encode(const EncoderModel<T>& model, std::span<const TokenSequence> batch, bool train, Rng& rng,
                     EncodeTrace<T>* trace = nullptr);

/// (B, L, hidden) -> (B, L, vocab).
template <typename T>
ad::Tensor<T> mlm_logits(const EncoderModel<T>& model, const ad::Tensor<T>& hidden);

/// [CLS] vector -> dropout (training only) -> linear head: (B, num_properties).
template <typename T>
ad::Tensor<T> regress(const EncoderModel<T>& model, const ad::Tensor<T>& hidden, bool train, Rng& rng);

/// Truncates a batch to the longest non-pad length it contains. Pad columns
/// cannot influence non-pad outputs, so this is only a cost saving.
std::vector<TokenSequence> trim_batch(std::span<const TokenSequence> batch);

// ---- checkpoints -----------------------------------------------------------

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
};

struct CheckpointMeta {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
};

template <typename T>
struct LoadedCheckpoint {
  EncoderModel<T> model;
  CheckpointMeta meta;
  std::vector<NamedArray> extra;  // e.g. optimizer state
};

/// Layout (little-endian): "PTXCKPT\0", u32 version, config (7 x u32, 2 x f32),
/// meta (3 x u64), u32 tensor count, then per tensor: u32 name length, name,
/// u32 rank, u32 dims, f32 values.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const EncoderModel<T>& model, const CheckpointMeta& meta = {},
                     std::span<const NamedArray> extra = {});

/// Validates every model tensor against the stored config.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace polytx

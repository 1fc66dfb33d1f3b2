#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "spotlight/audio/pitch.hpp"
#include "spotlight/style/layers.hpp"
#include "spotlight/vq/quantizer.hpp"

namespace spotlight::style {

using audio::VuvFlags;

/// How the unvoiced-filler attention treats mask (unvoiced) key positions.
///  kBiased:   logits multiplied by beta_mask at mask keys.
///  kBinary:   logits multiplied by 0 at mask keys.
///  kPlain:    no reweighting.
///  kAdditive: large negative bias added at mask keys (study mode only).
enum class AttentionMode { kBiased, kBinary, kPlain, kAdditive };

inline constexpr double kAdditiveMaskBias = -1e9;
inline constexpr double kMaskInitBound = 0.1;

struct StyleEncoderConfig {
  std::size_t dim = 256;
  std::size_t n_mels = 80;
  std::size_t uf_blocks = 3;
  std::size_t rvq_depth = vq::kDefaultRvqDepth;
  std::size_t codebook_size = vq::kDefaultCodebookSize;
  double commitment_weight = vq::kDefaultCommitmentWeight;
  double beta_mask = 0.02;
  std::size_t attention_heads = 1;
  std::size_t conv_blocks = 4;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

template <typename S>
struct Attention {
  Linear<S> query;
  Linear<S> key;
  Linear<S> value;

  static Attention create(std::size_t dim, Init& init);
  void collect(const std::string& prefix, NamedParams<S>& out) const;
};

template <typename S>
struct FillerBlock {
  ConvBlock<S> conv;
  Attention<S> attention;
};

template <typename S>
struct StyleEncoder {
  StyleEncoderConfig config;
  Linear<S> input_proj;                 // n_mels -> D
  std::vector<ConvBlock<S>> frontend;   // conv_blocks
  vq::RvqStack<S> rvq;
  diff::Tensor<S> mask_code;            // D, uniform(-0.1, 0.1)
  std::vector<FillerBlock<S>> filler;   // uf_blocks
  Attention<S> align;                   // query from content, key/value from style

  static StyleEncoder create(const StyleEncoderConfig& cfg, std::uint64_t seed);

  NamedParams<S> named_parameters() const;
  std::vector<diff::Tensor<S>> parameters() const { return tensors_of(named_parameters()); }

  /// Same architecture and values in another precision.
  template <typename T>
  StyleEncoder<T> cast() const {
    auto out = StyleEncoder<T>::create(config, 0);
    auto dst = out.named_parameters();
    copy_values(named_parameters(), dst);
    out.rvq.commitment_weight = rvq.commitment_weight;
    return out;
  }
};

template <typename S>
struct VoicedRows {
  diff::Tensor<S> rows;                 // V x D
  std::vector<std::size_t> index_map;   // source position of each row
};

struct EncodeMode {
  vq::GradientMode gradient = vq::GradientMode::kRotation;
  bool unvoiced_filler = true;   // false: "- UF", mask rows pass through
  bool voiced_extraction = true; // false: "- VE", quantize every frame
  AttentionMode attention = AttentionMode::kBiased;
};

template <typename S>
struct StyleEmbedding {
  diff::Tensor<S> frames;  // T_c x D after alignment
  VuvFlags vuv;
};

template <typename S>
struct EncodeResult {
  StyleEmbedding<S> style;
  vq::QuantizeOutput<S> quantizer;
  diff::Tensor<S> quantizer_input;  // rows handed to the RVQ
  diff::Tensor<S> filled;           // T_s x D, before alignment
};

template <typename S>
diff::Tensor<S> conv_frontend(const StyleEncoder<S>& enc, const diff::Tensor<S>& mel);

template <typename S>
VoicedRows<S> extract_voiced(const diff::Tensor<S>& x, const VuvFlags& vuv);

template <typename S>
diff::Tensor<S> scatter_with_mask_codes(const diff::Tensor<S>& q,
                                        const std::vector<std::size_t>& index_map,
                                        std::size_t length, const diff::Tensor<S>& mask);

/// Key-side weights per position for the given mode: 1 at voiced keys,
/// beta_mask / 0 / 1 at mask keys for kBiased / kBinary / kPlain.
std::vector<double> key_weights(const VuvFlags& vuv, double beta_mask, AttentionMode mode);

/// Reweighted logits L' of one head: (Q K^T / sqrt(d_head)) * beta_j per key,
/// or the additive mask bias in kAdditive mode. q and k are T x d_head.
template <typename S>
diff::Tensor<S> attention_logits(const diff::Tensor<S>& q, const diff::Tensor<S>& k,
                                 const VuvFlags& vuv, double beta_mask, AttentionMode mode);

/// softmax(L')V + x with L = QK^T / sqrt(d_head), L'_ij = L_ij * beta_j.
template <typename S>
diff::Tensor<S> biased_self_attention(const Attention<S>& attn, const diff::Tensor<S>& x,
                                      const VuvFlags& vuv, double beta_mask,
                                      AttentionMode mode = AttentionMode::kBiased,
                                      std::size_t heads = 1);

template <typename S>
diff::Tensor<S> unvoiced_filler(const StyleEncoder<S>& enc, const diff::Tensor<S>& x,
                                const VuvFlags& vuv,
                                AttentionMode mode = AttentionMode::kBiased);

/// softmax(Q K^T / sqrt(D)) V with Q from content, K and V from style.
template <typename S>
diff::Tensor<S> align_to_content(const Attention<S>& attn, const diff::Tensor<S>& style,
                                 const diff::Tensor<S>& content);

template <typename S>
EncodeResult<S> encode_style(const StyleEncoder<S>& enc, const diff::Tensor<S>& mel,
                             const VuvFlags& vuv, const diff::Tensor<S>& content,
                             const EncodeMode& mode = {},
                             vq::QuantizerFreeze* freeze = nullptr);

nlohmann::json config_json(const StyleEncoderConfig& cfg);
/// Reads every field; missing keys throw, the result is validated.
StyleEncoderConfig config_from_json(const nlohmann::json& j);

/// `<dir>/style_encoder.json` manifest (config + ordered tensor names) and
/// `<dir>/style_encoder.spt` holding one SPT1 block per name.
void save_style_encoder(const StyleEncoder<float>& enc, const std::filesystem::path& dir);
StyleEncoder<float> load_style_encoder(const std::filesystem::path& dir);

}  // namespace spotlight::style

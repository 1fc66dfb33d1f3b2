#include "spotlight/style/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "spotlight/diff/checkpoint.hpp"

namespace spotlight::style {

using diff::Tensor;

void StyleEncoderConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("style encoder config: " + field + " " + why);
  };
  if (dim == 0) fail("dim", "must be positive");
  if (n_mels == 0) fail("n_mels", "must be positive");
  if (!(beta_mask > 0.0 && beta_mask <= 1.0)) fail("beta_mask", "must lie in (0, 1]");
  if (uf_blocks < 1) fail("uf_blocks", "must be at least 1");
  if (rvq_depth < 1) fail("rvq_depth", "must be at least 1");
  if (codebook_size < 1) fail("codebook_size", "must be at least 1");
  if (attention_heads == 0 || dim % attention_heads != 0)
    fail("attention_heads", "must divide dim");
}

template <typename S>
Attention<S> Attention<S>::create(std::size_t dim, Init& init) {
  Attention a;
  a.query = Linear<S>::create(dim, dim, init);
  a.key = Linear<S>::create(dim, dim, init);
  a.value = Linear<S>::create(dim, dim, init);
  return a;
}

template <typename S>
void Attention<S>::collect(const std::string& prefix, NamedParams<S>& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
}

template <typename S>
StyleEncoder<S> StyleEncoder<S>::create(const StyleEncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  StyleEncoder enc;
  enc.config = cfg;
  Init init(seed);
  enc.input_proj = Linear<S>::create(cfg.n_mels, cfg.dim, init);
  for (std::size_t i = 0; i < cfg.conv_blocks; ++i)
    enc.frontend.push_back(ConvBlock<S>::create(cfg.dim, cfg.dim, init));
  enc.rvq = vq::RvqStack<S>::random(cfg.rvq_depth, cfg.codebook_size, cfg.dim, seed + 1,
                                    cfg.commitment_weight);
  enc.mask_code = init.uniform<S>({cfg.dim}, kMaskInitBound);
  for (std::size_t i = 0; i < cfg.uf_blocks; ++i) {
    FillerBlock<S> b;
    b.conv = ConvBlock<S>::create(cfg.dim, cfg.dim, init);
    b.attention = Attention<S>::create(cfg.dim, init);
    enc.filler.push_back(std::move(b));
  }
  enc.align = Attention<S>::create(cfg.dim, init);
  return enc;
}

template <typename S>
NamedParams<S> StyleEncoder<S>::named_parameters() const {
  NamedParams<S> out;
  input_proj.collect("frontend.input", out);
  for (std::size_t i = 0; i < frontend.size(); ++i)
    frontend[i].collect("frontend.block" + std::to_string(i), out);
  for (std::size_t l = 0; l < rvq.layers.size(); ++l)
    out.emplace_back("rvq.layer" + std::to_string(l), rvq.layers[l].codes);
  out.emplace_back("mask_code", mask_code);
  for (std::size_t i = 0; i < filler.size(); ++i) {
    const std::string p = "filler.block" + std::to_string(i);
    filler[i].conv.collect(p + ".conv", out);
    filler[i].attention.collect(p + ".attention", out);
  }
  align.collect("align", out);
  return out;
}

template <typename S>
Tensor<S> conv_frontend(const StyleEncoder<S>& enc, const Tensor<S>& mel) {
  if (mel.rank() != 2 || mel.rows() == 0 || mel.cols() != enc.config.n_mels) {
    throw diff::DimensionError("conv_frontend: expected T x " +
                               std::to_string(enc.config.n_mels) + " mel, got " +
                               diff::to_string(mel.shape()));
  }
  auto x = enc.input_proj(mel);
  for (const auto& block : enc.frontend) x = block(x);
  return x;
}

template <typename S>
VoicedRows<S> extract_voiced(const Tensor<S>& x, const VuvFlags& vuv) {
  if (x.rank() != 2 || x.rows() != vuv.flags.size()) {
    throw diff::DimensionError("extract_voiced: " + std::to_string(vuv.flags.size()) +
                               " flags for input " + diff::to_string(x.shape()));
  }
  VoicedRows<S> out;
  for (std::size_t t = 0; t < vuv.flags.size(); ++t)
    if (vuv.flags[t]) out.index_map.push_back(t);
  out.rows = diff::gather_rows(x, out.index_map);
  return out;
}

template <typename S>
Tensor<S> scatter_with_mask_codes(const Tensor<S>& q, const std::vector<std::size_t>& index_map,
                                  std::size_t length, const Tensor<S>& mask) {
  return diff::scatter_rows(q, index_map, length, mask);
}

std::vector<double> key_weights(const VuvFlags& vuv, double beta_mask, AttentionMode mode) {
  std::vector<double> beta(vuv.flags.size(), 1.0);
  for (std::size_t j = 0; j < beta.size(); ++j) {
    if (vuv.flags[j]) continue;
    if (mode == AttentionMode::kBiased) beta[j] = beta_mask;
    if (mode == AttentionMode::kBinary) beta[j] = 0.0;
  }
  return beta;
}

template <typename S>
Tensor<S> attention_logits(const Tensor<S>& q, const Tensor<S>& k, const VuvFlags& vuv,
                           double beta_mask, AttentionMode mode) {
  const std::size_t t = k.rows();
  if (vuv.flags.size() != t) {
    throw diff::DimensionError("attention_logits: " + std::to_string(vuv.flags.size()) +
                               " flags for " + std::to_string(t) + " keys");
  }
  auto logits = diff::scale(diff::matmul(q, diff::transpose(k)),
                            1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (mode == AttentionMode::kPlain) return logits;
  const std::size_t rows = q.rows();
  // Per-key reweighting broadcast over query rows.
  std::vector<S> w(rows * t);
  if (mode == AttentionMode::kAdditive) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < t; ++j)
        w[i * t + j] = vuv.flags[j] ? S(0) : static_cast<S>(kAdditiveMaskBias);
    return diff::add(logits, Tensor<S>::from({rows, t}, std::move(w)));
  }
  const auto beta = key_weights(vuv, beta_mask, mode);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < t; ++j) w[i * t + j] = static_cast<S>(beta[j]);
  return diff::mul(logits, Tensor<S>::from({rows, t}, std::move(w)));
}

template <typename S>
Tensor<S> biased_self_attention(const Attention<S>& attn, const Tensor<S>& x,
                                const VuvFlags& vuv, double beta_mask, AttentionMode mode,
                                std::size_t heads) {
  if (x.rank() != 2 || x.rows() != vuv.flags.size()) {
    throw diff::DimensionError("biased_self_attention: " + std::to_string(vuv.flags.size()) +
                               " flags for input " + diff::to_string(x.shape()));
  }
  const std::size_t d = x.cols();
  if (heads == 0 || d % heads != 0) {
    throw diff::DimensionError("biased_self_attention: " + std::to_string(heads) +
                               " heads do not divide D=" + std::to_string(d));
  }
  const std::size_t dh = d / heads;
  auto q = attn.query(x);
  auto k = attn.key(x);
  auto v = attn.value(x);

  std::vector<Tensor<S>> outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = heads == 1 ? q : diff::slice_cols(q, h * dh, dh);
    auto kh = heads == 1 ? k : diff::slice_cols(k, h * dh, dh);
    auto vh = heads == 1 ? v : diff::slice_cols(v, h * dh, dh);
    auto logits = attention_logits(qh, kh, vuv, beta_mask, mode);
    outputs.push_back(diff::matmul(diff::softmax_lastdim(logits), vh));
  }
  auto mixed = heads == 1 ? outputs.front() : diff::concat_cols(outputs);
  return diff::add(mixed, x);
}

template <typename S>
Tensor<S> unvoiced_filler(const StyleEncoder<S>& enc, const Tensor<S>& x, const VuvFlags& vuv,
                          AttentionMode mode) {
  auto h = x;
  for (const auto& block : enc.filler) {
    h = block.conv(h);
    h = biased_self_attention(block.attention, h, vuv, enc.config.beta_mask, mode,
                              enc.config.attention_heads);
  }
  return h;
}

template <typename S>
Tensor<S> align_to_content(const Attention<S>& attn, const Tensor<S>& style,
                           const Tensor<S>& content) {
  if (style.rank() != 2 || style.rows() == 0) {
    throw std::invalid_argument("align_to_content: empty style sequence");
  }
  if (content.rank() != 2 || content.rows() == 0 || content.cols() != style.cols()) {
    throw diff::DimensionError("align_to_content: content " + diff::to_string(content.shape()) +
                               " vs style " + diff::to_string(style.shape()));
  }
  auto q = attn.query(content);
  auto k = attn.key(style);
  auto v = attn.value(style);
  auto logits = diff::scale(diff::matmul(q, diff::transpose(k)),
                            1.0 / std::sqrt(static_cast<double>(style.cols())));
  return diff::matmul(diff::softmax_lastdim(logits), v);
}

template <typename S>
EncodeResult<S> encode_style(const StyleEncoder<S>& enc, const Tensor<S>& mel,
                             const VuvFlags& vuv, const Tensor<S>& content,
                             const EncodeMode& mode, vq::QuantizerFreeze* freeze) {
  if (mel.rank() != 2 || mel.rows() != vuv.flags.size()) {
    throw diff::DimensionError("encode_style: " + std::to_string(vuv.flags.size()) +
                               " flags for mel " + diff::to_string(mel.shape()));
  }
  EncodeResult<S> out;
  auto x = conv_frontend(enc, mel);
  Tensor<S> z;
  if (mode.voiced_extraction) {
    auto voiced = extract_voiced(x, vuv);
    out.quantizer_input = voiced.rows;
    out.quantizer = vq::rvq_forward(enc.rvq, voiced.rows, mode.gradient, freeze);
    z = scatter_with_mask_codes(out.quantizer.quantized, voiced.index_map, x.rows(),
                                enc.mask_code);
  } else {
    out.quantizer_input = x;
    out.quantizer = vq::rvq_forward(enc.rvq, x, mode.gradient, freeze);
    z = out.quantizer.quantized;
  }
  if (mode.unvoiced_filler) z = unvoiced_filler(enc, z, vuv, mode.attention);
  out.filled = z;
  out.style.frames = align_to_content(enc.align, z, content);
  out.style.vuv = vuv;
  return out;
}

nlohmann::json config_json(const StyleEncoderConfig& c) {
  return {{"dim", c.dim},
          {"n_mels", c.n_mels},
          {"uf_blocks", c.uf_blocks},
          {"rvq_depth", c.rvq_depth},
          {"codebook_size", c.codebook_size},
          {"commitment_weight", c.commitment_weight},
          {"beta_mask", c.beta_mask},
          {"attention_heads", c.attention_heads},
          {"conv_blocks", c.conv_blocks}};
}

StyleEncoderConfig config_from_json(const nlohmann::json& j) {
  StyleEncoderConfig c;
  c.dim = j.at("dim");
  c.n_mels = j.at("n_mels");
  c.uf_blocks = j.at("uf_blocks");
  c.rvq_depth = j.at("rvq_depth");
  c.codebook_size = j.at("codebook_size");
  c.commitment_weight = j.at("commitment_weight");
  c.beta_mask = j.at("beta_mask");
  c.attention_heads = j.at("attention_heads");
  c.conv_blocks = j.at("conv_blocks");
  c.validate();
  return c;
}

void save_style_encoder(const StyleEncoder<float>& enc, const std::filesystem::path& dir) {
  diff::save_checkpoint(dir, "style_encoder", config_json(enc.config), enc.named_parameters());
}

StyleEncoder<float> load_style_encoder(const std::filesystem::path& dir) {
  auto ck = diff::load_checkpoint(dir, "style_encoder");
  auto enc = StyleEncoder<float>::create(config_from_json(ck.meta), 0);
  auto dst = enc.named_parameters();
  copy_values(ck.tensors, dst);
  return enc;
}

#define SPOTLIGHT_INSTANTIATE_STYLE(S)                                                          \
  template struct Attention<S>;                                                                 \
  template struct StyleEncoder<S>;                                                              \
  template Tensor<S> conv_frontend<S>(const StyleEncoder<S>&, const Tensor<S>&);                \
  template VoicedRows<S> extract_voiced<S>(const Tensor<S>&, const VuvFlags&);                  \
  template Tensor<S> scatter_with_mask_codes<S>(const Tensor<S>&,                               \
                                                const std::vector<std::size_t>&, std::size_t,   \
                                                const Tensor<S>&);                              \
  template Tensor<S> attention_logits<S>(const Tensor<S>&, const Tensor<S>&, const VuvFlags&,  \
                                         double, AttentionMode);                                \
  template Tensor<S> biased_self_attention<S>(const Attention<S>&, const Tensor<S>&,            \
                                              const VuvFlags&, double, AttentionMode,           \
                                              std::size_t);                                     \
  template Tensor<S> unvoiced_filler<S>(const StyleEncoder<S>&, const Tensor<S>&,               \
                                        const VuvFlags&, AttentionMode);                        \
  template Tensor<S> align_to_content<S>(const Attention<S>&, const Tensor<S>&,                 \
                                         const Tensor<S>&);                                     \
  template EncodeResult<S> encode_style<S>(const StyleEncoder<S>&, const Tensor<S>&,            \
                                           const VuvFlags&, const Tensor<S>&,                   \
                                           const EncodeMode&, vq::QuantizerFreeze*);

SPOTLIGHT_INSTANTIATE_STYLE(float)
SPOTLIGHT_INSTANTIATE_STYLE(double)

}  // namespace spotlight::style

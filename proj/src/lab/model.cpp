#include "spotlight/lab/model.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include "spotlight/diff/checkpoint.hpp"

namespace spotlight::lab {

ToyModel ToyModel::create(const ToyModelConfig& cfg, std::uint64_t seed) {
  cfg.style.validate();
  if (cfg.n_symbols == 0) throw std::invalid_argument("toy model: n_symbols must be positive");
  const std::size_t d = cfg.style.dim;
  ToyModel m;
  m.config = cfg;
  style::Init init(seed);
  m.content_table = init.uniform<float>({cfg.n_symbols, d}, 1.0);
  m.content_proj = style::Linear<float>::create(d, d, init);
  m.encoder = style::StyleEncoder<float>::create(cfg.style, seed + 101);
  m.global_head = style::Linear<float>::create(d, d, init);
  for (std::size_t i = 0; i < cfg.decoder_blocks; ++i)
    m.decoder.push_back(style::ConvBlock<float>::create(d, d, init));
  m.output = style::Linear<float>::create(d, cfg.style.n_mels, init);
  m.head_style = objectives::MlpHead<float>::create(d, init);
  m.head_prosody = objectives::MlpHead<float>::create(audio::kLowBandBins, init);
  return m;
}

style::NamedParams<float> ToyModel::named_parameters() const {
  style::NamedParams<float> out;
  out.emplace_back("content.table", content_table);
  content_proj.collect("content.proj", out);
  for (auto& [name, t] : encoder.named_parameters()) out.emplace_back("style." + name, t);
  global_head.collect("global", out);
  for (std::size_t i = 0; i < decoder.size(); ++i)
    decoder[i].collect("decoder.block" + std::to_string(i), out);
  output.collect("decoder.output", out);
  head_style.collect("head.style", out);
  head_prosody.collect("head.prosody", out);
  return out;
}

Tensor<float> to_tensor(const FrameMatrix& m, bool requires_grad) {
  return Tensor<float>::from({m.rows, m.cols}, m.values, requires_grad);
}

FrameMatrix to_frame_matrix(const Tensor<float>& t) {
  FrameMatrix m(t.rows(), t.cols());
  std::copy(t.data().begin(), t.data().end(), m.values.begin());
  return m;
}

Tensor<float> encode_content(const ToyModel& model, const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw std::invalid_argument("encode_content: empty symbol sequence");
  return model.content_proj(diff::gather_rows(model.content_table, ids));
}

ModelOutput forward(const ToyModel& model, const std::vector<std::size_t>& content_ids,
                    const Tensor<float>& reference_mel, const VuvFlags& reference_vuv,
                    const style::EncodeMode& mode) {
  ModelOutput out;
  out.content = encode_content(model, content_ids);
  out.style = style::encode_style(model.encoder, reference_mel, reference_vuv, out.content, mode);
  out.global = model.global_head(diff::mean_rows(out.style.style.frames));
  auto h = diff::add_bias(diff::add(out.content, out.style.style.frames), out.global);
  for (const auto& block : model.decoder) h = block(h);
  out.mel = model.output(h);
  return out;
}

void save_model(const ToyModel& model, const std::filesystem::path& dir,
                const nlohmann::json& extra) {
  nlohmann::json meta{{"kind", kModelKind},
                      {"style", style::config_json(model.config.style)},
                      {"n_symbols", model.config.n_symbols},
                      {"decoder_blocks", model.config.decoder_blocks}};
  meta.update(extra);
  diff::save_checkpoint(dir, "model", meta, model.named_parameters());
}

ToyModel load_model(const std::filesystem::path& dir) {
  auto ck = diff::load_checkpoint(dir, "model");
  if (ck.meta.value("kind", kModelKind) != std::string(kModelKind))
    throw std::runtime_error(dir.string() + " is not a trained model checkpoint");
  ToyModelConfig cfg;
  cfg.style = style::config_from_json(ck.meta.at("style"));
  cfg.n_symbols = ck.meta.at("n_symbols");
  cfg.decoder_blocks = ck.meta.at("decoder_blocks");
  auto model = ToyModel::create(cfg, 0);
  auto dst = model.named_parameters();
  style::copy_values(ck.tensors, dst);
  return model;
}

void save_identity_oracle(const std::filesystem::path& dir) {
  diff::save_checkpoint(dir, "model", {{"kind", kIdentityOracleKind}}, {});
}

nlohmann::json model_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw std::runtime_error("missing " + (dir / "model.json").string());
  return nlohmann::json::parse(in).at("meta");
}

}  // namespace spotlight::lab

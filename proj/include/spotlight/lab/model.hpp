#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "spotlight/lab/synth.hpp"
#include "spotlight/objectives/losses.hpp"
#include "spotlight/style/encoder.hpp"

namespace spotlight::lab {

using diff::Tensor;

struct ToyModelConfig {
  style::StyleEncoderConfig style;
  std::size_t n_symbols = kSymbols;
  std::size_t decoder_blocks = 3;
};

/// Content embedding + pointwise content encoder, the style encoder, a
/// mean-pooled global style head, and a residual conv decoder to 80 mel bins.
struct ToyModel {
  ToyModelConfig config;
  Tensor<float> content_table;  // n_symbols x D
  style::Linear<float> content_proj;
  style::StyleEncoder<float> encoder;
  style::Linear<float> global_head;
  std::vector<style::ConvBlock<float>> decoder;
  style::Linear<float> output;  // D -> n_mels
  objectives::MlpHead<float> head_style;
  objectives::MlpHead<float> head_prosody;

  static ToyModel create(const ToyModelConfig& cfg, std::uint64_t seed);
  style::NamedParams<float> named_parameters() const;
  std::vector<Tensor<float>> parameters() const { return style::tensors_of(named_parameters()); }
};

struct ModelOutput {
  Tensor<float> mel;      // T_c x n_mels
  Tensor<float> content;  // E_c, T_c x D
  Tensor<float> global;   // E_g, 1 x D
  style::EncodeResult<float> style;
};

Tensor<float> to_tensor(const FrameMatrix& m, bool requires_grad = false);
FrameMatrix to_frame_matrix(const Tensor<float>& t);

Tensor<float> encode_content(const ToyModel& model, const std::vector<std::size_t>& ids);

/// Decodes `content_ids` in the style of the reference mel.
ModelOutput forward(const ToyModel& model, const std::vector<std::size_t>& content_ids,
                    const Tensor<float>& reference_mel, const VuvFlags& reference_vuv,
                    const style::EncodeMode& mode = {});

inline constexpr const char* kModelKind = "toy_model";
inline constexpr const char* kIdentityOracleKind = "identity_copy";

/// Writes `<dir>/model.json` and `<dir>/model.spt`. `extra` is merged into
/// the metadata (e.g. the training mode).
void save_model(const ToyModel& model, const std::filesystem::path& dir,
                const nlohmann::json& extra = nlohmann::json::object());
ToyModel load_model(const std::filesystem::path& dir);
/// Checkpoint whose "reconstruction" is the reference mel itself; it bounds
/// the achievable metric scores.
void save_identity_oracle(const std::filesystem::path& dir);
/// Metadata of a checkpoint written by save_model or save_identity_oracle.
nlohmann::json model_meta(const std::filesystem::path& dir);

}  // namespace spotlight::lab

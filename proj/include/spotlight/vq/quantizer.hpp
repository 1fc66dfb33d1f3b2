#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spotlight/diff/tensor.hpp"
#include "spotlight/vq/rotation.hpp"

namespace spotlight::vq {

inline constexpr std::size_t kDefaultCodebookSize = 128;
inline constexpr std::size_t kDefaultRvqDepth = 4;
inline constexpr double kDefaultCommitmentWeight = 0.25;

enum class GradientMode { kRotation, kStraightThrough };

template <typename S>
struct Codebook {
  diff::Tensor<S> codes;  // K x D, learnable

  std::size_t size() const { return codes.rows(); }
  std::size_t dim() const { return codes.cols(); }

  /// i.i.d. normal(0, 1/sqrt(D)) rows.
  static Codebook random(std::size_t k, std::size_t d, std::uint64_t seed);
};

struct NearestCode {
  std::size_t index = 0;
  double distance = 0.0;  // squared Euclidean
};

/// Exhaustive argmin of squared distance; ties resolve to the lowest index.
template <typename S>
NearestCode nearest_code(const Codebook<S>& cb, std::span<const S> e);

/// Frozen per-row quantizer decisions. Recording captures the selected code,
/// rotation and scale at an evaluation point; replaying reuses them so the
/// quantizer becomes the fixed linear map it is treated as in the backward
/// pass. Used for finite-difference checks through quantization.
struct FrozenRow {
  std::size_t index = 0;
  bool rotated = false;  // false: straight-through (mode or degenerate row)
  double scale = 1.0;
  std::optional<Rotation> rotation;
  std::vector<double> offset;  // straight-through: q - e at the recorded point
};

struct QuantizerFreeze {
  bool replay = false;
  std::vector<std::vector<FrozenRow>> layers;
  std::size_t cursor = 0;

  void start_replay() {
    replay = true;
    cursor = 0;
  }
};

template <typename S>
struct QuantizeResult {
  diff::Tensor<S> output;            // T x D, equals the selected codes
  std::vector<std::size_t> indices;  // T
  std::size_t degenerate_rows = 0;   // rows that fell back to straight-through
};

/// Rotation-trick quantization: forward returns (|q|/|e|) R e == q per row;
/// backward maps dL/dq~ to (|q|/|e|) R^T dL/dq~ with R and the scale frozen.
/// Rows with |e| or |q| <= 1e-8 fall back to straight-through.
template <typename S>
QuantizeResult<S> quantize_rt(const diff::Tensor<S>& e, const Codebook<S>& cb,
                              QuantizerFreeze* freeze = nullptr);

/// Straight-through quantization: forward returns the selected codes,
/// backward copies the gradient to e unchanged.
template <typename S>
QuantizeResult<S> quantize_ste(const diff::Tensor<S>& e, const Codebook<S>& cb,
                               QuantizerFreeze* freeze = nullptr);

template <typename S>
struct RvqStack {
  std::vector<Codebook<S>> layers;
  double commitment_weight = kDefaultCommitmentWeight;

  std::size_t depth() const { return layers.size(); }
  std::size_t dim() const { return layers.front().dim(); }
  std::size_t codebook_size() const { return layers.front().size(); }
  std::vector<diff::Tensor<S>> parameters() const;

  static RvqStack random(std::size_t depth, std::size_t k, std::size_t d, std::uint64_t seed,
                         double commitment_weight = kDefaultCommitmentWeight);
  /// Validates shared D and non-empty layers.
  void validate() const;
};

template <typename S>
struct QuantizeOutput {
  diff::Tensor<S> quantized;                     // T x D, sum of per-layer outputs
  std::vector<std::vector<std::size_t>> indices;  // T x depth
  std::vector<double> residual_norms;            // |r^0| .. |r^depth| (Frobenius)
  diff::Tensor<S> commitment_loss;               // sum over layers of mean |r - sg[q]|^2
  diff::Tensor<S> codebook_loss;                 // sum over layers of mean |sg[r] - q|^2
  double commitment_weight = kDefaultCommitmentWeight;
  std::size_t degenerate_rows = 0;
};

/// Residual quantization: r^0 = e, layer l quantizes r^l and
/// r^{l+1} = r^l - sg[q^l]; the output sums the per-layer quantizer outputs.
template <typename S>
QuantizeOutput<S> rvq_forward(const RvqStack<S>& stack, const diff::Tensor<S>& e,
                              GradientMode mode, QuantizerFreeze* freeze = nullptr);

/// codebook_loss + commitment_weight * commitment_loss.
template <typename S>
diff::Tensor<S> rvq_loss(const QuantizeOutput<S>& out);

/// Writes `<dir>/rvq.json` (K, D, depth, commitment_weight) and
/// `<dir>/rvq.spt` (one SPT1 block per layer).
void save_rvq(const RvqStack<float>& stack, const std::filesystem::path& dir);
RvqStack<float> load_rvq(const std::filesystem::path& dir);

}  // namespace spotlight::vq

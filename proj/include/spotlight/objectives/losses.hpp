#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "spotlight/style/layers.hpp"

namespace spotlight::objectives {

inline constexpr std::size_t kHeadDim = 32;
inline constexpr double kCosineEps = 1e-8;

/// in -> 32 -> GELU -> 32.
template <typename S>
struct MlpHead {
  style::Linear<S> first;
  style::Linear<S> second;

  static MlpHead create(std::size_t in_dim, style::Init& init);
  diff::Tensor<S> operator()(const diff::Tensor<S>& x) const;
  void collect(const std::string& prefix, style::NamedParams<S>& out) const;
};

struct LossWeights {
  double rvq = 1.0;
  double adv = 0.05;  // multiplies a constant-zero adversarial term
  double sd = 0.02;
  double sp = 0.02;
};

struct LossReport {
  std::int64_t step = 0;
  double recon = 0.0;
  double rvq = 0.0;
  double sd = 0.0;
  double sp = 0.0;
  double adv = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
  /// One JSON object per line.
  void write_ndjson(std::ostream& out) const;
};

/// A loss term was NaN or infinite; training must stop.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& term, double value);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

enum class SdReduction { kNormalized, kRaw };

/// ||sg[E_c] E_s^T||_F^2, divided by T^2 unless kRaw. No gradient reaches E_c.
template <typename S>
diff::Tensor<S> sd_loss(const diff::Tensor<S>& content, const diff::Tensor<S>& style,
                        SdReduction reduction = SdReduction::kNormalized);

/// -sum_i cos(p_i, s_i) on already projected frames.
template <typename S>
diff::Tensor<S> sp_loss_projected(const diff::Tensor<S>& style_proj,
                                  const diff::Tensor<S>& prosody_proj);

/// Projects style (T x D) and low-band mel (T x 20) through their heads and
/// returns sp_loss_projected.
template <typename S>
diff::Tensor<S> sp_loss(const diff::Tensor<S>& style, const diff::Tensor<S>& lowband,
                        const MlpHead<S>& head_s, const MlpHead<S>& head_p);

template <typename S>
struct TotalLoss {
  diff::Tensor<S> total;
  LossReport report;
};

/// recon + w.rvq * rvq + w.sd * sd + w.sp * sp (adversarial term fixed at 0).
/// Throws TrainingAborted naming the first non-finite term.
template <typename S>
TotalLoss<S> total_loss(const diff::Tensor<S>& recon, const diff::Tensor<S>& rvq,
                        const diff::Tensor<S>& sd, const diff::Tensor<S>& sp,
                        const LossWeights& w);

}  // namespace spotlight::objectives

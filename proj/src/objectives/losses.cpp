#include "spotlight/objectives/losses.hpp"

#include <cmath>

#include "spotlight/diff/ops.hpp"

namespace spotlight::objectives {

using diff::Tensor;

template <typename S>
MlpHead<S> MlpHead<S>::create(std::size_t in_dim, style::Init& init) {
  return {style::Linear<S>::create(in_dim, kHeadDim, init),
          style::Linear<S>::create(kHeadDim, kHeadDim, init)};
}

template <typename S>
Tensor<S> MlpHead<S>::operator()(const Tensor<S>& x) const {
  return second(diff::gelu(first(x)));
}

template <typename S>
void MlpHead<S>::collect(const std::string& prefix, style::NamedParams<S>& out) const {
  first.collect(prefix + ".first", out);
  second.collect(prefix + ".second", out);
}

nlohmann::json LossReport::to_json() const {
  return {{"step", step}, {"recon", recon}, {"rvq", rvq}, {"sd", sd},
          {"sp", sp},     {"adv", adv},     {"total", total}};
}

void LossReport::write_ndjson(std::ostream& out) const { out << to_json().dump() << "\n"; }

TrainingAborted::TrainingAborted(const std::string& term, double value)
    : std::runtime_error("training aborted: loss term '" + term + "' is " +
                         std::to_string(value)),
      term_(term) {}

template <typename S>
Tensor<S> sd_loss(const Tensor<S>& content, const Tensor<S>& style, SdReduction reduction) {
  if (content.rank() != 2 || content.shape() != style.shape()) {
    throw diff::DimensionError("sd_loss: content " + diff::to_string(content.shape()) +
                               " vs style " + diff::to_string(style.shape()));
  }
  auto gram = diff::matmul(content.detach(), diff::transpose(style));
  auto frob = diff::sum(diff::square(gram));
  if (reduction == SdReduction::kRaw) return frob;
  const double t = static_cast<double>(content.rows());
  return diff::scale(frob, 1.0 / (t * t));
}

template <typename S>
Tensor<S> sp_loss_projected(const Tensor<S>& style_proj, const Tensor<S>& prosody_proj) {
  if (style_proj.rank() != 2 || style_proj.shape() != prosody_proj.shape()) {
    throw diff::DimensionError("sp_loss: style " + diff::to_string(style_proj.shape()) +
                               " vs prosody " + diff::to_string(prosody_proj.shape()));
  }
  return diff::neg(diff::sum(diff::row_cosine(prosody_proj, style_proj, kCosineEps)));
}

template <typename S>
Tensor<S> sp_loss(const Tensor<S>& style, const Tensor<S>& lowband, const MlpHead<S>& head_s,
                  const MlpHead<S>& head_p) {
  if (style.rank() != 2 || lowband.rank() != 2 || style.rows() != lowband.rows()) {
    throw diff::DimensionError("sp_loss: style " + diff::to_string(style.shape()) +
                               " vs low band " + diff::to_string(lowband.shape()));
  }
  return sp_loss_projected(head_s(style), head_p(lowband));
}

template <typename S>
TotalLoss<S> total_loss(const Tensor<S>& recon, const Tensor<S>& rvq, const Tensor<S>& sd,
                        const Tensor<S>& sp, const LossWeights& w) {
  const std::pair<const char*, const Tensor<S>*> terms[] = {
      {"recon", &recon}, {"rvq", &rvq}, {"sd", &sd}, {"sp", &sp}};
  for (const auto& [name, t] : terms) {
    if (t->numel() != 1) throw diff::DimensionError(std::string("total_loss: '") + name + "' is not a scalar");
    if (!std::isfinite(static_cast<double>(t->item()))) throw TrainingAborted(name, t->item());
  }
  TotalLoss<S> out;
  // Zero-weighted terms are still reported but stay out of the graph.
  out.total = recon;
  if (w.rvq != 0.0) out.total = diff::add(out.total, diff::scale(rvq, w.rvq));
  if (w.sd != 0.0) out.total = diff::add(out.total, diff::scale(sd, w.sd));
  if (w.sp != 0.0) out.total = diff::add(out.total, diff::scale(sp, w.sp));
  out.report.recon = recon.item();
  out.report.rvq = rvq.item();
  out.report.sd = sd.item();
  out.report.sp = sp.item();
  out.report.total = out.total.item();
  if (!std::isfinite(out.report.total)) throw TrainingAborted("total", out.report.total);
  return out;
}

#define SPOTLIGHT_INSTANTIATE_OBJECTIVES(S)                                                    \
  template struct MlpHead<S>;                                                                  \
  template Tensor<S> sd_loss<S>(const Tensor<S>&, const Tensor<S>&, SdReduction);              \
  template Tensor<S> sp_loss_projected<S>(const Tensor<S>&, const Tensor<S>&);                 \
  template Tensor<S> sp_loss<S>(const Tensor<S>&, const Tensor<S>&, const MlpHead<S>&,         \
                                const MlpHead<S>&);                                            \
  template TotalLoss<S> total_loss<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,    \
                                      const Tensor<S>&, const LossWeights&);

SPOTLIGHT_INSTANTIATE_OBJECTIVES(float)
SPOTLIGHT_INSTANTIATE_OBJECTIVES(double)

}  // namespace spotlight::objectives

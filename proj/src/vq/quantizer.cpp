#include "spotlight/vq/quantizer.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <string>

#include "json.hpp"
#include "spotlight/diff/ops.hpp"
#include "spotlight/diff/serialize.hpp"

namespace spotlight::vq {

using diff::Tensor;

template <typename S>
Codebook<S> Codebook<S>::random(std::size_t k, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<S> values(k * d);
  for (auto& v : values) v = static_cast<S>(dist(rng));
  return {Tensor<S>::from({k, d}, std::move(values), true)};
}

template <typename S>
NearestCode nearest_code(const Codebook<S>& cb, std::span<const S> e) {
  if (!cb.codes.defined() || cb.size() == 0) throw std::invalid_argument("nearest_code: empty codebook");
  const std::size_t d = cb.dim();
  if (e.size() != d) {
    throw diff::DimensionError("nearest_code: query of " + std::to_string(e.size()) +
                               " dims vs codebook dim " + std::to_string(d));
  }
  auto codes = cb.codes.data();
  NearestCode best{0, 0.0};
  for (std::size_t k = 0; k < cb.size(); ++k) {
    const S* c = codes.data() + k * d;
    // Eight independent partial sums let the compiler vectorise the loop.
    double lanes[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= d; i += 8)
      for (std::size_t j = 0; j < 8; ++j) {
        const double diff = static_cast<double>(e[i + j]) - static_cast<double>(c[i + j]);
        lanes[j] += diff * diff;
      }
    for (; i < d; ++i) {
      const double diff = static_cast<double>(e[i]) - static_cast<double>(c[i]);
      lanes[0] += diff * diff;
    }
    const double dist = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                        ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    if (k == 0 || dist < best.distance) best = {k, dist};
  }
  return best;
}

namespace {

template <typename S>
QuantizeResult<S> quantize_impl(const Tensor<S>& e, const Codebook<S>& cb, GradientMode mode,
                                QuantizerFreeze* freeze) {
  if (e.rank() != 2 || e.cols() != cb.dim()) {
    throw diff::DimensionError("quantize: input " + diff::to_string(e.shape()) +
                               " does not match codebook " + diff::to_string(cb.codes.shape()));
  }
  const std::size_t rows = e.rows(), d = e.cols();
  auto in = e.data();
  auto codes = cb.codes.data();

  auto frozen = std::make_shared<std::vector<FrozenRow>>();
  const bool replay = freeze != nullptr && freeze->replay;
  if (replay) {
    if (freeze->cursor >= freeze->layers.size() || freeze->layers[freeze->cursor].size() != rows) {
      throw std::logic_error("quantizer freeze replay does not match the recorded graph");
    }
    *frozen = freeze->layers[freeze->cursor++];
  } else {
    frozen->resize(rows);
    std::vector<double> ev(d), qv(d);
    for (std::size_t t = 0; t < rows; ++t) {
      auto row = in.subspan(t * d, d);
      FrozenRow& fr = (*frozen)[t];
      fr.index = nearest_code(cb, row).index;
      for (std::size_t i = 0; i < d; ++i) {
        ev[i] = row[i];
        qv[i] = codes[fr.index * d + i];
      }
      const double ne = norm(ev), nq = norm(qv);
      if (mode == GradientMode::kRotation && ne > kNormEpsilon && nq > kNormEpsilon) {
        fr.rotated = true;
        fr.scale = nq / ne;
        fr.rotation = Rotation::align(ev, qv);
      } else {
        fr.offset.resize(d);
        for (std::size_t i = 0; i < d; ++i) fr.offset[i] = qv[i] - ev[i];
      }
    }
    if (freeze != nullptr) freeze->layers.push_back(*frozen);
  }

  QuantizeResult<S> result;
  result.indices.resize(rows);
  std::vector<S> out(rows * d);
  std::vector<double> ev(d), mapped(d);
  for (std::size_t t = 0; t < rows; ++t) {
    const FrozenRow& fr = (*frozen)[t];
    result.indices[t] = fr.index;
    S* dst = out.data() + t * d;
    if (fr.rotated) {
      for (std::size_t i = 0; i < d; ++i) ev[i] = in[t * d + i];
      fr.rotation->apply(ev, mapped);
      for (std::size_t i = 0; i < d; ++i) dst[i] = static_cast<S>(fr.scale * mapped[i]);
    } else {
      ++result.degenerate_rows;
      for (std::size_t i = 0; i < d; ++i) {
        dst[i] = replay ? static_cast<S>(in[t * d + i] + fr.offset[i]) : codes[fr.index * d + i];
      }
    }
  }
  if (mode == GradientMode::kStraightThrough) result.degenerate_rows = 0;

  result.output = Tensor<S>::make_result(
      {rows, d}, std::move(out), {e}, mode == GradientMode::kRotation ? "quantize_rt" : "quantize_ste",
      [frozen, rows, d](diff::Node<S>& self) {
        auto& ge = self.inputs[0]->grad_buffer();
        std::vector<double> g(d), back(d);
        for (std::size_t t = 0; t < rows; ++t) {
          const FrozenRow& fr = (*frozen)[t];
          const S* gy = self.grad.data() + t * d;
          if (!fr.rotated) {
            for (std::size_t i = 0; i < d; ++i) ge[t * d + i] += gy[i];
            continue;
          }
          for (std::size_t i = 0; i < d; ++i) g[i] = gy[i];
          fr.rotation->apply_transpose(g, back);
          for (std::size_t i = 0; i < d; ++i) ge[t * d + i] += static_cast<S>(fr.scale * back[i]);
        }
      });
  return result;
}

}  // namespace

template <typename S>
QuantizeResult<S> quantize_rt(const Tensor<S>& e, const Codebook<S>& cb, QuantizerFreeze* freeze) {
  return quantize_impl(e, cb, GradientMode::kRotation, freeze);
}

template <typename S>
QuantizeResult<S> quantize_ste(const Tensor<S>& e, const Codebook<S>& cb, QuantizerFreeze* freeze) {
  return quantize_impl(e, cb, GradientMode::kStraightThrough, freeze);
}

template <typename S>
std::vector<Tensor<S>> RvqStack<S>::parameters() const {
  std::vector<Tensor<S>> params;
  for (const auto& l : layers) params.push_back(l.codes);
  return params;
}

template <typename S>
RvqStack<S> RvqStack<S>::random(std::size_t depth, std::size_t k, std::size_t d,
                                std::uint64_t seed, double commitment_weight) {
  RvqStack stack;
  stack.commitment_weight = commitment_weight;
  for (std::size_t l = 0; l < depth; ++l) stack.layers.push_back(Codebook<S>::random(k, d, seed + 7919 * l));
  return stack;
}

template <typename S>
void RvqStack<S>::validate() const {
  if (layers.empty()) throw std::invalid_argument("RVQ stack has no layers");
  for (const auto& l : layers) {
    if (l.size() == 0) throw std::invalid_argument("RVQ stack has an empty codebook");
    if (l.dim() != layers.front().dim()) throw diff::DimensionError("RVQ layers disagree on D");
  }
}

template <typename S>
QuantizeOutput<S> rvq_forward(const RvqStack<S>& stack, const Tensor<S>& e, GradientMode mode,
                              QuantizerFreeze* freeze) {
  stack.validate();
  if (e.rank() != 2 || e.cols() != stack.dim()) {
    throw diff::DimensionError("rvq_forward: input " + diff::to_string(e.shape()) +
                               " vs codebook dim " + std::to_string(stack.dim()));
  }
  QuantizeOutput<S> out;
  out.commitment_weight = stack.commitment_weight;
  const std::size_t rows = e.rows();
  out.indices.assign(rows, std::vector<std::size_t>(stack.depth(), 0));
  auto frob = [](const Tensor<S>& t) {
    double acc = 0.0;
    for (S v : t.data()) acc += static_cast<double>(v) * v;
    return std::sqrt(acc);
  };
  out.residual_norms.push_back(frob(e));
  if (rows == 0) {
    out.quantized = Tensor<S>::zeros({0, stack.dim()});
    out.commitment_loss = Tensor<S>::scalar(0);
    out.codebook_loss = Tensor<S>::scalar(0);
    for (std::size_t l = 0; l < stack.depth(); ++l) out.residual_norms.push_back(0.0);
    return out;
  }

  Tensor<S> residual = e;
  Tensor<S> quantized, commit, codebook;
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    const auto& cb = stack.layers[l];
    auto q = mode == GradientMode::kRotation ? quantize_rt(residual, cb, freeze)
                                             : quantize_ste(residual, cb, freeze);
    out.degenerate_rows += q.degenerate_rows;
    for (std::size_t t = 0; t < rows; ++t) out.indices[t][l] = q.indices[t];
    auto selected = diff::gather_rows(cb.codes, q.indices);
    auto selected_sg = selected.detach();
    auto c_term = diff::mean(diff::square(diff::sub(residual, selected_sg)));
    auto b_term = diff::mean(diff::square(diff::sub(residual.detach(), selected)));
    commit = l == 0 ? c_term : diff::add(commit, c_term);
    codebook = l == 0 ? b_term : diff::add(codebook, b_term);
    quantized = l == 0 ? q.output : diff::add(quantized, q.output);
    residual = diff::sub(residual, selected_sg);
    out.residual_norms.push_back(frob(residual));
  }
  out.quantized = quantized;
  out.commitment_loss = commit;
  out.codebook_loss = codebook;
  return out;
}

template <typename S>
Tensor<S> rvq_loss(const QuantizeOutput<S>& out) {
  return diff::add(out.codebook_loss, diff::scale(out.commitment_loss, out.commitment_weight));
}

void save_rvq(const RvqStack<float>& stack, const std::filesystem::path& dir) {
  stack.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest{{"K", stack.codebook_size()},
                          {"D", stack.dim()},
                          {"depth", stack.depth()},
                          {"commitment_weight", stack.commitment_weight}};
  std::ofstream(dir / "rvq.json") << manifest.dump(2) << "\n";
  std::ofstream blocks(dir / "rvq.spt", std::ios::binary);
  for (const auto& l : stack.layers) diff::write_tensor(blocks, l.codes);
}

RvqStack<float> load_rvq(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "rvq.json");
  if (!mf) throw std::runtime_error("missing " + (dir / "rvq.json").string());
  const auto manifest = nlohmann::json::parse(mf);
  RvqStack<float> stack;
  stack.commitment_weight = manifest.at("commitment_weight").get<double>();
  std::ifstream blocks(dir / "rvq.spt", std::ios::binary);
  const auto depth = manifest.at("depth").get<std::size_t>();
  for (std::size_t l = 0; l < depth; ++l) {
    auto codes = diff::read_tensor(blocks);
    codes.set_requires_grad(true);
    stack.layers.push_back({codes});
  }
  stack.validate();
  if (stack.dim() != manifest.at("D").get<std::size_t>() ||
      stack.codebook_size() != manifest.at("K").get<std::size_t>()) {
    throw std::runtime_error("rvq.spt does not match its manifest");
  }
  return stack;
}

#define SPOTLIGHT_INSTANTIATE_VQ(S)                                                              \
  template struct Codebook<S>;                                                                   \
  template struct RvqStack<S>;                                                                   \
  template NearestCode nearest_code<S>(const Codebook<S>&, std::span<const S>);                  \
  template QuantizeResult<S> quantize_rt<S>(const Tensor<S>&, const Codebook<S>&, QuantizerFreeze*);  \
  template QuantizeResult<S> quantize_ste<S>(const Tensor<S>&, const Codebook<S>&, QuantizerFreeze*); \
  template QuantizeOutput<S> rvq_forward<S>(const RvqStack<S>&, const Tensor<S>&, GradientMode,  \
                                            QuantizerFreeze*);                                   \
  template Tensor<S> rvq_loss<S>(const QuantizeOutput<S>&);

SPOTLIGHT_INSTANTIATE_VQ(float)
SPOTLIGHT_INSTANTIATE_VQ(double)

}  // namespace spotlight::vq

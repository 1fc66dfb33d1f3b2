#include "spotlight/style/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace spotlight::style {

using diff::Tensor;

template <typename S>
Tensor<S> Init::uniform(diff::Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<S> values(diff::numel(shape));
  for (auto& v : values) v = static_cast<S>(dist(rng_));
  return Tensor<S>::from(std::move(shape), std::move(values), true);
}

template <typename S>
Tensor<S> Init::constant(diff::Shape shape, double value) {
  return Tensor<S>::full(std::move(shape), static_cast<S>(value), true);
}

template <typename S>
Linear<S> Linear<S>::create(std::size_t in, std::size_t out, Init& init) {
  return {init.uniform<S>({in, out}, 1.0 / std::sqrt(static_cast<double>(in))),
          init.constant<S>({out}, 0.0)};
}

template <typename S>
Tensor<S> Linear<S>::operator()(const Tensor<S>& x) const {
  return diff::add_bias(diff::matmul(x, weight), bias);
}

template <typename S>
void Linear<S>::collect(const std::string& prefix, NamedParams<S>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

template <typename S>
ConvBlock<S> ConvBlock<S>::create(std::size_t dim, std::size_t hidden, Init& init) {
  ConvBlock b;
  b.depthwise = init.uniform<S>({diff::kDepthwiseKernel, dim},
                                1.0 / std::sqrt(static_cast<double>(diff::kDepthwiseKernel)));
  b.norm_gain = init.constant<S>({dim}, 1.0);
  b.norm_bias = init.constant<S>({dim}, 0.0);
  b.expand = Linear<S>::create(dim, hidden, init);
  b.project = Linear<S>::create(hidden, dim, init);
  return b;
}

template <typename S>
Tensor<S> ConvBlock<S>::operator()(const Tensor<S>& x) const {
  auto h = diff::conv1d(x, depthwise, diff::Conv1dMode::kDepthwise7);
  h = diff::layer_norm(h, norm_gain, norm_bias);
  h = project(diff::gelu(expand(h)));
  return diff::add(x, h);
}

template <typename S>
void ConvBlock<S>::collect(const std::string& prefix, NamedParams<S>& out) const {
  out.emplace_back(prefix + ".depthwise", depthwise);
  out.emplace_back(prefix + ".norm.gain", norm_gain);
  out.emplace_back(prefix + ".norm.bias", norm_bias);
  expand.collect(prefix + ".expand", out);
  project.collect(prefix + ".project", out);
}

template <typename S, typename T>
void copy_values(const NamedParams<S>& src, NamedParams<T>& dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("parameter count mismatch: " + std::to_string(src.size()) +
                                " vs " + std::to_string(dst.size()));
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto& [name, from] = src[i];
    auto& to = dst[i].second;
    if (name != dst[i].first || from.shape() != to.shape()) {
      throw std::invalid_argument("parameter mismatch at '" + name + "' vs '" +
                                  dst[i].first + "'");
    }
    auto out = to.mutable_data();
    auto in = from.data();
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = static_cast<T>(in[j]);
  }
}

template <typename S>
std::vector<Tensor<S>> tensors_of(const NamedParams<S>& named) {
  std::vector<Tensor<S>> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

template Tensor<float> Init::uniform<float>(diff::Shape, double);
template Tensor<double> Init::uniform<double>(diff::Shape, double);
template Tensor<float> Init::constant<float>(diff::Shape, double);
template Tensor<double> Init::constant<double>(diff::Shape, double);
template struct Linear<float>;
template struct Linear<double>;
template struct ConvBlock<float>;
template struct ConvBlock<double>;
template void copy_values(const NamedParams<float>&, NamedParams<float>&);
template void copy_values(const NamedParams<float>&, NamedParams<double>&);
template void copy_values(const NamedParams<double>&, NamedParams<float>&);
template void copy_values(const NamedParams<double>&, NamedParams<double>&);
template std::vector<Tensor<float>> tensors_of(const NamedParams<float>&);
template std::vector<Tensor<double>> tensors_of(const NamedParams<double>&);

}  // namespace spotlight::style

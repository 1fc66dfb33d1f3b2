#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spotlight/diff/ops.hpp"
#include "spotlight/diff/tensor.hpp"

// Small learnable building blocks shared by the style encoder and the toy
// model. Every block lists its parameters under stable dotted names.
namespace spotlight::style {

template <typename S>
using NamedParams = std::vector<std::pair<std::string, diff::Tensor<S>>>;

/// Deterministic parameter initialiser; each draw advances one engine.
class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}
  template <typename S>
  diff::Tensor<S> uniform(diff::Shape shape, double bound);
  template <typename S>
  diff::Tensor<S> constant(diff::Shape shape, double value);

 private:
  std::mt19937_64 rng_;
};

template <typename S>
struct Linear {
  diff::Tensor<S> weight;  // in x out
  diff::Tensor<S> bias;    // out

  static Linear create(std::size_t in, std::size_t out, Init& init);
  diff::Tensor<S> operator()(const diff::Tensor<S>& x) const;
  void collect(const std::string& prefix, NamedParams<S>& out) const;
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

/// Residual conv block: depthwise-7 conv -> layer norm -> pointwise ->
/// GELU -> pointwise, added back to the input. The ConvNeXt blocks of the
/// unvoiced filler use the same layout.
template <typename S>
struct ConvBlock {
  diff::Tensor<S> depthwise;  // 7 x D
  diff::Tensor<S> norm_gain;
  diff::Tensor<S> norm_bias;
  Linear<S> expand;
  Linear<S> project;

  static ConvBlock create(std::size_t dim, std::size_t hidden, Init& init);
  diff::Tensor<S> operator()(const diff::Tensor<S>& x) const;
  void collect(const std::string& prefix, NamedParams<S>& out) const;
};

/// Copies values from `src` into `dst` pairwise by position; names and shapes
/// must agree. Used to move parameters between precisions and checkpoints.
template <typename S, typename T>
void copy_values(const NamedParams<S>& src, NamedParams<T>& dst);

template <typename S>
std::vector<diff::Tensor<S>> tensors_of(const NamedParams<S>& named);

}  // namespace spotlight::style

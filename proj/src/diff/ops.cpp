#include "spotlight/diff/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace spotlight::diff {
namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ConstMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using MutMap = Eigen::Map<RowMat<S>>;

template <typename S>
bool is_scalar(const Tensor<S>& t) {
  return t.rank() == 0;
}

template <typename S>
void require_matrix(const Tensor<S>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         to_string(t.shape()));
  }
}

template <typename S>
Node<S>& input(Node<S>& self, std::size_t i) {
  return *self.inputs[i];
}

template <typename S>
bool wants_grad(Node<S>& self, std::size_t i) {
  return self.inputs[i]->requires_grad;
}

enum class Binary { kAdd, kSub, kMul };

template <typename S>
Tensor<S> binary(const Tensor<S>& a, const Tensor<S>& b, Binary kind,
                 const char* name) {
  const bool same = a.shape() == b.shape();
  if (!same && !is_scalar(a) && !is_scalar(b)) {
    throw DimensionError(std::string(name) + ": incompatible shapes " +
                         to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const Shape shape = (same || is_scalar(b)) ? a.shape() : b.shape();
  const std::size_t n = numel(shape);
  const std::size_t sa = (is_scalar(a) && !same) ? 0 : 1;
  const std::size_t sb = (is_scalar(b) && !same) ? 0 : 1;
  std::vector<S> out(n);
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const S x = da[i * sa];
    const S y = db[i * sb];
    switch (kind) {
      case Binary::kAdd: out[i] = x + y; break;
      case Binary::kSub: out[i] = x - y; break;
      case Binary::kMul: out[i] = x * y; break;
    }
  }
  return Tensor<S>::make_result(
      shape, std::move(out), {a, b}, name, [kind, n, sa, sb](Node<S>& self) {
        const auto& g = self.grad;
        auto& na = input(self, 0);
        auto& nb = input(self, 1);
        if (na.requires_grad) {
          auto& ga = na.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            const S d = kind == Binary::kMul ? g[i] * nb.value[i * sb] : g[i];
            ga[i * sa] += d;
          }
        }
        if (nb.requires_grad) {
          auto& gb = nb.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            S d = g[i];
            if (kind == Binary::kSub) d = -d;
            if (kind == Binary::kMul) d = g[i] * na.value[i * sa];
            gb[i * sb] += d;
          }
        }
      });
}

template <typename S, typename Fwd, typename Deriv>
Tensor<S> unary(const Tensor<S>& a, const char* name, Fwd fwd, Deriv deriv) {
  const std::size_t n = a.numel();
  std::vector<S> out(n);
  auto da = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(da[i]);
  return Tensor<S>::make_result(a.shape(), std::move(out), {a}, name,
                                [n, deriv](Node<S>& self) {
                                  auto& in = input(self, 0);
                                  auto& g = in.grad_buffer();
                                  for (std::size_t i = 0; i < n; ++i) {
                                    g[i] += self.grad[i] * deriv(in.value[i]);
                                  }
                                });
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, Binary::kAdd, "add");
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, Binary::kSub, "sub");
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, Binary::kMul, "mul");
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double factor) {
  const S f = static_cast<S>(factor);
  return unary(a, "scale", [f](S x) { return x * f; }, [f](S) { return f; });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return unary(a, "neg", [](S x) { return -x; }, [](S) { return S(-1); });
}

template <typename S>
Tensor<S> square(const Tensor<S>& a) {
  return unary(a, "square", [](S x) { return x * x; }, [](S x) { return 2 * x; });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& a) {
  return unary(
      a, "abs", [](S x) { return std::abs(x); },
      [](S x) { return x > 0 ? S(1) : (x < 0 ? S(-1) : S(0)); });
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  auto fwd = [](S x) {
    const double xd = x;
    const double u = c * (xd + kGeluCubic * xd * xd * xd);
    return static_cast<S>(0.5 * xd * (1.0 + std::tanh(u)));
  };
  auto deriv = [](S x) {
    const double xd = x;
    const double u = c * (xd + kGeluCubic * xd * xd * xd);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * kGeluCubic * xd * xd);
    return static_cast<S>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du);
  };
  return unary(a, "gelu", fwd, deriv);
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  double acc = 0.0;
  for (S v : a.data()) acc += v;
  const std::size_t n = a.numel();
  return Tensor<S>::make_result({}, {static_cast<S>(acc)}, {a}, "sum",
                                [n](Node<S>& self) {
                                  auto& g = input(self, 0).grad_buffer();
                                  for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
                                });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
  double acc = 0.0;
  for (S v : a.data()) acc += v;
  const std::size_t n = a.numel();
  return Tensor<S>::make_result(
      {}, {static_cast<S>(acc / n)}, {a}, "mean", [n](Node<S>& self) {
        auto& g = input(self, 0).grad_buffer();
        const S d = self.grad[0] / static_cast<S>(n);
        for (std::size_t i = 0; i < n; ++i) g[i] += d;
      });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " +
                         to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const Eigen::Index m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<S> out(static_cast<std::size_t>(m * n));
  MutMap<S>(out.data(), m, n).noalias() =
      ConstMap<S>(a.data().data(), m, k) * ConstMap<S>(b.data().data(), k, n);
  return Tensor<S>::make_result(
      {static_cast<std::size_t>(m), static_cast<std::size_t>(n)}, std::move(out),
      {a, b}, "matmul", [m, k, n](Node<S>& self) {
        ConstMap<S> g(self.grad.data(), m, n);
        auto& na = input(self, 0);
        auto& nb = input(self, 1);
        if (na.requires_grad) {
          MutMap<S>(na.grad_buffer().data(), m, k).noalias() +=
              g * ConstMap<S>(nb.value.data(), k, n).transpose();
        }
        if (nb.requires_grad) {
          MutMap<S>(nb.grad_buffer().data(), k, n).noalias() +=
              ConstMap<S>(na.value.data(), m, k).transpose() * g;
        }
      });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  require_matrix(a, "transpose");
  const Eigen::Index r = a.rows(), c = a.cols();
  std::vector<S> out(a.numel());
  MutMap<S>(out.data(), c, r) = ConstMap<S>(a.data().data(), r, c).transpose();
  return Tensor<S>::make_result(
      {a.cols(), a.rows()}, std::move(out), {a}, "transpose", [r, c](Node<S>& self) {
        MutMap<S>(input(self, 0).grad_buffer().data(), r, c) +=
            ConstMap<S>(self.grad.data(), c, r).transpose();
      });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape " + to_string(a.shape()) + " -> " +
                         to_string(shape));
  }
  std::vector<S> out(a.data().begin(), a.data().end());
  return Tensor<S>::make_result(std::move(shape), std::move(out), {a}, "reshape",
                                [](Node<S>& self) {
                                  auto& g = input(self, 0).grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                });
}

template <typename S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& bias) {
  require_matrix(x, "add_bias");
  if (bias.numel() != x.cols()) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) +
                         " does not match rows of " + to_string(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<S> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
  return Tensor<S>::make_result(
      x.shape(), std::move(out), {x, bias}, "add_bias", [rows, cols](Node<S>& self) {
        if (wants_grad(self, 0)) {
          auto& gx = input(self, 0).grad_buffer();
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
          auto& gb = input(self, 1).grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += self.grad[r * cols + c];
        }
      });
}

template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("softmax_lastdim needs a non-empty last axis, got " +
                         to_string(x.shape()));
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<S> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const S* row = in.data() + r * n;
    S* y = out.data() + r * n;
    const S peak = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(static_cast<double>(row[i]) - peak);
      y[i] = static_cast<S>(e);
      total += e;
    }
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<S>(y[i] / total);
  }
  return Tensor<S>::make_result(
      x.shape(), std::move(out), {x}, "softmax", [rows, n](Node<S>& self) {
        auto& gx = input(self, 0).grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          const S* y = self.value.data() + r * n;
          const S* g = self.grad.data() + r * n;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += static_cast<double>(g[i]) * y[i];
          for (std::size_t i = 0; i < n; ++i) {
            gx[r * n + i] += static_cast<S>(y[i] * (g[i] - dot));
          }
        }
      });
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias) {
  require_matrix(x, "layer_norm");
  const std::size_t rows = x.rows(), d = x.cols();
  if (d == 0 || gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(d) +
                         " entries for input " + to_string(x.shape()));
  }
  auto normalized = std::make_shared<std::vector<S>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<S> out(x.numel());
  auto in = x.data();
  auto g = gain.data();
  auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const S* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= d;
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const double xh = (row[i] - mu) * is;
      (*normalized)[r * d + i] = static_cast<S>(xh);
      out[r * d + i] = static_cast<S>(xh * g[i] + b[i]);
    }
  }
  return Tensor<S>::make_result(
      x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
      [rows, d, normalized, inv_std](Node<S>& self) {
        const auto& xh = *normalized;
        const auto& gy = self.grad;
        const auto& gain_v = input(self, 1).value;
        if (wants_grad(self, 0)) {
          auto& gx = input(self, 0).grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
              const double dxh = static_cast<double>(gy[r * d + i]) * gain_v[i];
              m1 += dxh;
              m2 += dxh * xh[r * d + i];
            }
            m1 /= d;
            m2 /= d;
            for (std::size_t i = 0; i < d; ++i) {
              const double dxh = static_cast<double>(gy[r * d + i]) * gain_v[i];
              gx[r * d + i] += static_cast<S>((*inv_std)[r] *
                                              (dxh - m1 - xh[r * d + i] * m2));
            }
          }
        }
        if (wants_grad(self, 1)) {
          auto& gg = input(self, 1).grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < d; ++i) gg[i] += gy[r * d + i] * xh[r * d + i];
        }
        if (wants_grad(self, 2)) {
          auto& gb = input(self, 2).grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < d; ++i) gb[i] += gy[r * d + i];
        }
      });
}

template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& kernel, Conv1dMode mode) {
  require_matrix(x, "conv1d");
  require_matrix(kernel, "conv1d");
  if (mode == Conv1dMode::kPointwise) {
    if (kernel.rows() != x.cols()) {
      throw DimensionError("conv1d pointwise: kernel " + to_string(kernel.shape()) +
                           " does not accept " + std::to_string(x.cols()) +
                           " input channels");
    }
    return matmul(x, kernel);
  }
  if (kernel.rows() != kDepthwiseKernel || kernel.cols() != x.cols()) {
    throw DimensionError("conv1d depthwise: kernel " + to_string(kernel.shape()) +
                         " incompatible with input " + to_string(x.shape()));
  }
  const std::ptrdiff_t length = static_cast<std::ptrdiff_t>(x.rows());
  const std::size_t c = x.cols();
  constexpr std::ptrdiff_t half = kDepthwiseKernel / 2;
  std::vector<S> out(x.numel(), S(0));
  auto in = x.data();
  auto k = kernel.data();
  for (std::ptrdiff_t t = 0; t < length; ++t) {
    S* y = out.data() + t * c;
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(kDepthwiseKernel); ++j) {
      const std::ptrdiff_t src = t + j - half;
      if (src < 0 || src >= length) continue;
      const S* xs = in.data() + src * c;
      const S* kj = k.data() + j * c;
      for (std::size_t ch = 0; ch < c; ++ch) y[ch] += kj[ch] * xs[ch];
    }
  }
  return Tensor<S>::make_result(
      x.shape(), std::move(out), {x, kernel}, "conv1d_depthwise",
      [length, c](Node<S>& self) {
        auto& nx = input(self, 0);
        auto& nk = input(self, 1);
        for (std::ptrdiff_t t = 0; t < length; ++t) {
          const S* gy = self.grad.data() + t * c;
          for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(kDepthwiseKernel); ++j) {
            const std::ptrdiff_t src = t + j - half;
            if (src < 0 || src >= length) continue;
            if (nx.requires_grad) {
              S* gx = nx.grad_buffer().data() + src * c;
              const S* kj = nk.value.data() + j * c;
              for (std::size_t ch = 0; ch < c; ++ch) gx[ch] += kj[ch] * gy[ch];
            }
            if (nk.requires_grad) {
              S* gk = nk.grad_buffer().data() + j * c;
              const S* xs = nx.value.data() + src * c;
              for (std::size_t ch = 0; ch < c; ++ch) gk[ch] += xs[ch] * gy[ch];
            }
          }
        }
      });
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, std::span<const std::size_t> indices) {
  require_matrix(table, "gather_rows");
  const std::size_t d = table.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<S> out(idx.size() * d);
  auto src = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= table.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) +
                              " outside table of " + std::to_string(table.rows()) +
                              " rows");
    }
    std::copy_n(src.data() + idx[i] * d, d, out.data() + i * d);
  }
  Shape shape{idx.size(), d};
  return Tensor<S>::make_result(
      std::move(shape), std::move(out), {table}, "gather_rows",
      [idx = std::move(idx), d](Node<S>& self) {
        auto& g = input(self, 0).grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t c = 0; c < d; ++c) g[idx[i] * d + c] += self.grad[i * d + c];
      });
}

template <typename S>
Tensor<S> scatter_rows(const Tensor<S>& rows, std::span<const std::size_t> positions,
                       std::size_t length, const Tensor<S>& fill) {
  const std::size_t d = fill.numel();
  if (rows.numel() != 0) {
    require_matrix(rows, "scatter_rows");
    if (rows.cols() != d) {
      throw DimensionError("scatter_rows: rows " + to_string(rows.shape()) +
                           " vs fill " + to_string(fill.shape()));
    }
  }
  if (rows.numel() / std::max<std::size_t>(d, 1) != positions.size()) {
    throw DimensionError("scatter_rows: " + std::to_string(positions.size()) +
                         " positions for rows " + to_string(rows.shape()));
  }
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  for (std::size_t v = 0; v < pos.size(); ++v) {
    if (pos[v] >= length || (v > 0 && pos[v] <= pos[v - 1])) {
      throw std::out_of_range("scatter_rows: position " + std::to_string(pos[v]) +
                              " is out of range or not increasing");
    }
  }
  std::vector<char> taken(length, 0);
  for (auto p : pos) taken[p] = 1;
  std::vector<S> out(length * d);
  auto f = fill.data();
  auto r = rows.data();
  for (std::size_t t = 0; t < length; ++t) std::copy_n(f.data(), d, out.data() + t * d);
  for (std::size_t v = 0; v < pos.size(); ++v)
    std::copy_n(r.data() + v * d, d, out.data() + pos[v] * d);
  return Tensor<S>::make_result(
      {length, d}, std::move(out), {rows, fill}, "scatter_rows",
      [pos = std::move(pos), taken = std::move(taken), d, length](Node<S>& self) {
        if (wants_grad(self, 0)) {
          auto& gr = input(self, 0).grad_buffer();
          for (std::size_t v = 0; v < pos.size(); ++v)
            for (std::size_t c = 0; c < d; ++c) gr[v * d + c] += self.grad[pos[v] * d + c];
        }
        if (wants_grad(self, 1)) {
          auto& gf = input(self, 1).grad_buffer();
          for (std::size_t t = 0; t < length; ++t) {
            if (taken[t]) continue;
            for (std::size_t c = 0; c < d; ++c) gf[c] += self.grad[t * d + c];
          }
        }
      });
}

template <typename S>
Tensor<S> mean_rows(const Tensor<S>& x) {
  require_matrix(x, "mean_rows");
  const std::size_t rows = x.rows(), d = x.cols();
  if (rows == 0) throw DimensionError("mean_rows of an empty matrix");
  std::vector<double> acc(d, 0.0);
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) acc[c] += in[r * d + c];
  std::vector<S> out(d);
  for (std::size_t c = 0; c < d; ++c) out[c] = static_cast<S>(acc[c] / rows);
  return Tensor<S>::make_result({1, d}, std::move(out), {x}, "mean_rows",
                                [rows, d](Node<S>& self) {
                                  auto& g = input(self, 0).grad_buffer();
                                  const S inv = S(1) / static_cast<S>(rows);
                                  for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t c = 0; c < d; ++c)
                                      g[r * d + c] += self.grad[c] * inv;
                                });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t rows = x.rows(), d = x.cols();
  if (begin + count > d) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         to_string(x.shape()));
  }
  std::vector<S> out(rows * count);
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(in.data() + r * d + begin, count, out.data() + r * count);
  return Tensor<S>::make_result(
      {rows, count}, std::move(out), {x}, "slice_cols", [rows, d, begin, count](Node<S>& self) {
        auto& g = input(self, 0).grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < count; ++c)
            g[r * d + begin + c] += self.grad[r * count + c];
      });
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row counts differ (" + to_string(p.shape()) + ")");
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<S> out(rows * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto in = p.data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(in.data() + r * p.cols(), p.cols(), out.data() + r * total + offset);
    offset += p.cols();
  }
  return Tensor<S>::make_result(
      {rows, total}, std::move(out), parts, "concat_cols",
      [rows, total, widths = std::move(widths)](Node<S>& self) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < widths.size(); ++i) {
          if (wants_grad(self, i)) {
            auto& g = input(self, i).grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[i]; ++c)
                g[r * widths[i] + c] += self.grad[r * total + off + c];
          }
          off += widths[i];
        }
      });
}

template <typename S>
Tensor<S> row_cosine(const Tensor<S>& a, const Tensor<S>& b, double eps) {
  require_matrix(a, "row_cosine");
  if (a.shape() != b.shape()) {
    throw DimensionError("row_cosine: shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
  }
  const std::size_t rows = a.rows(), d = a.cols();
  std::vector<S> out(rows);
  auto stats = std::make_shared<std::vector<double>>(rows * 4);  // dot, |a|, |b|, denom
  auto va = a.data();
  auto vb = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = va[r * d + c], y = vb[r * d + c];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    const double den = na * nb + eps;
    (*stats)[r * 4 + 0] = dot;
    (*stats)[r * 4 + 1] = na;
    (*stats)[r * 4 + 2] = nb;
    (*stats)[r * 4 + 3] = den;
    out[r] = static_cast<S>(dot / den);
  }
  return Tensor<S>::make_result(
      {rows}, std::move(out), {a, b}, "row_cosine", [rows, d, stats](Node<S>& self) {
        auto& na = input(self, 0);
        auto& nb = input(self, 1);
        for (std::size_t r = 0; r < rows; ++r) {
          const double dot = (*stats)[r * 4], la = (*stats)[r * 4 + 1],
                       lb = (*stats)[r * 4 + 2], den = (*stats)[r * 4 + 3];
          const double g = self.grad[r];
          // d/da = b/den - dot * |b| * (a/|a|) / den^2, symmetric for b.
          const double ka = la > 0 ? dot * lb / (la * den * den) : 0.0;
          const double kb = lb > 0 ? dot * la / (lb * den * den) : 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double x = na.value[r * d + c], y = nb.value[r * d + c];
            if (na.requires_grad) na.grad_buffer()[r * d + c] += static_cast<S>(g * (y / den - ka * x));
            if (nb.requires_grad) nb.grad_buffer()[r * d + c] += static_cast<S>(g * (x / den - kb * y));
          }
        }
      });
}

template <typename S>
Tensor<S> corrupt_backward(const Tensor<S>& x, double factor) {
  std::vector<S> out(x.data().begin(), x.data().end());
  return Tensor<S>::make_result(x.shape(), std::move(out), {x}, "corrupt_backward",
                                [factor](Node<S>& self) {
                                  auto& g = input(self, 0).grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    g[i] += static_cast<S>(self.grad[i] * factor);
                                });
}

#define SPOTLIGHT_INSTANTIATE_OPS(S)                                                   \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> scale(const Tensor<S>&, double);                                  \
  template Tensor<S> neg(const Tensor<S>&);                                            \
  template Tensor<S> square(const Tensor<S>&);                                         \
  template Tensor<S> abs(const Tensor<S>&);                                            \
  template Tensor<S> gelu(const Tensor<S>&);                                           \
  template Tensor<S> sum(const Tensor<S>&);                                            \
  template Tensor<S> mean(const Tensor<S>&);                                           \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                       \
  template Tensor<S> transpose(const Tensor<S>&);                                      \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                 \
  template Tensor<S> add_bias(const Tensor<S>&, const Tensor<S>&);                     \
  template Tensor<S> softmax_lastdim(const Tensor<S>&);                                \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&); \
  template Tensor<S> conv1d(const Tensor<S>&, const Tensor<S>&, Conv1dMode);           \
  template Tensor<S> gather_rows(const Tensor<S>&, std::span<const std::size_t>);      \
  template Tensor<S> scatter_rows(const Tensor<S>&, std::span<const std::size_t>,      \
                                  std::size_t, const Tensor<S>&);                      \
  template Tensor<S> mean_rows(const Tensor<S>&);                                      \
  template Tensor<S> slice_cols(const Tensor<S>&, std::size_t, std::size_t);           \
  template Tensor<S> concat_cols(const std::vector<Tensor<S>>&);                       \
  template Tensor<S> row_cosine(const Tensor<S>&, const Tensor<S>&, double);           \
  template Tensor<S> corrupt_backward(const Tensor<S>&, double);

SPOTLIGHT_INSTANTIATE_OPS(float)
SPOTLIGHT_INSTANTIATE_OPS(double)

}  // namespace spotlight::diff

#include "spotlight/lab/grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <utility>

#include "spotlight/diff/grad_check.hpp"
#include "spotlight/diff/ops.hpp"
#include "spotlight/objectives/losses.hpp"
#include "spotlight/style/encoder.hpp"
#include "spotlight/vq/quantizer.hpp"

namespace spotlight::lab {

namespace {

using T64 = diff::Tensor<double>;
using Fn = std::function<T64(const T64&)>;

struct Check {
  std::string name;
  diff::Shape input;
  std::function<Fn(std::uint64_t seed)> build;  // returns the scalar function
  bool away_from_zero = false;                   // keep inputs off the |x| kink
};

T64 random(diff::Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(diff::numel(shape));
  for (auto& x : v) x = dist(rng);
  return T64::from(std::move(shape), std::move(v));
}

T64 project(const T64& y, std::uint64_t seed) {
  return diff::sum(diff::mul(y, random(y.shape(), seed)));
}

style::StyleEncoderConfig small_encoder() {
  style::StyleEncoderConfig cfg;
  cfg.dim = 8;
  cfg.n_mels = 6;
  cfg.codebook_size = 8;
  cfg.uf_blocks = 1;
  cfg.conv_blocks = 1;
  return cfg;
}

std::vector<Check> checks() {
  std::vector<Check> c;
  auto unary = [&](std::string name, diff::Shape s, std::function<T64(const T64&)> op,
                   bool away = false) {
    c.push_back({std::move(name), s,
                 [op](std::uint64_t seed) -> Fn {
                   return [op, seed](const T64& x) { return project(op(x), seed + 1); };
                 },
                 away});
  };
  auto with_other = [&](std::string name, diff::Shape s, diff::Shape other,
                        std::function<T64(const T64&, const T64&)> op) {
    c.push_back({std::move(name), s, [op, other](std::uint64_t seed) -> Fn {
                   auto o = random(other, seed + 2);
                   return [op, o, seed](const T64& x) { return project(op(x, o), seed + 1); };
                 }});
  };

  with_other("add", {3, 4}, {3, 4}, [](const T64& x, const T64& o) { return diff::add(x, o); });
  with_other("sub", {3, 4}, {3, 4}, [](const T64& x, const T64& o) { return diff::sub(o, x); });
  with_other("mul", {3, 4}, {3, 4}, [](const T64& x, const T64& o) { return diff::mul(x, o); });
  with_other("mul_scalar", {3, 4}, {}, [](const T64& x, const T64& o) { return diff::mul(o, x); });
  unary("scale", {3, 4}, [](const T64& x) { return diff::scale(x, -1.7); });
  unary("neg", {3, 4}, [](const T64& x) { return diff::neg(x); });
  unary("square", {3, 4}, [](const T64& x) { return diff::square(x); });
  unary("abs", {3, 4}, [](const T64& x) { return diff::abs(x); }, true);
  unary("gelu", {3, 4}, [](const T64& x) { return diff::gelu(x); });
  unary("sum", {3, 4}, [](const T64& x) { return diff::scale(diff::sum(diff::square(x)), 0.5); });
  unary("mean", {3, 4}, [](const T64& x) { return diff::mean(diff::square(x)); });
  with_other("matmul", {3, 4}, {4, 5}, [](const T64& x, const T64& o) { return diff::matmul(x, o); });
  with_other("matmul_rhs", {4, 5}, {3, 4}, [](const T64& x, const T64& o) { return diff::matmul(o, x); });
  unary("transpose", {3, 4}, [](const T64& x) { return diff::transpose(x); });
  unary("reshape", {3, 4}, [](const T64& x) { return diff::reshape(x, {2, 6}); });
  with_other("add_bias", {4}, {3, 4}, [](const T64& b, const T64& x) { return diff::add_bias(x, b); });
  unary("softmax_lastdim", {3, 5}, [](const T64& x) { return diff::softmax_lastdim(x); });
  c.push_back({"layer_norm", {3, 6}, [](std::uint64_t seed) -> Fn {
                 auto g = random({6}, seed + 2), b = random({6}, seed + 3);
                 return [g, b, seed](const T64& x) { return project(diff::layer_norm(x, g, b), seed + 1); };
               }});
  c.push_back({"layer_norm_gain", {6}, [](std::uint64_t seed) -> Fn {
                 auto x = random({3, 6}, seed + 2), b = random({6}, seed + 3);
                 return [x, b, seed](const T64& g) { return project(diff::layer_norm(x, g, b), seed + 1); };
               }});
  with_other("conv1d_pointwise", {5, 3}, {3, 4}, [](const T64& x, const T64& k) {
    return diff::conv1d(x, k, diff::Conv1dMode::kPointwise);
  });
  with_other("conv1d_depthwise7", {9, 3}, {7, 3}, [](const T64& x, const T64& k) {
    return diff::conv1d(x, k, diff::Conv1dMode::kDepthwise7);
  });
  with_other("conv1d_depthwise7_kernel", {7, 3}, {9, 3}, [](const T64& k, const T64& x) {
    return diff::conv1d(x, k, diff::Conv1dMode::kDepthwise7);
  });
  unary("gather_rows", {4, 3}, [](const T64& x) {
    const std::vector<std::size_t> idx{2, 0, 2, 3};
    return diff::gather_rows(x, idx);
  });
  with_other("scatter_rows", {2, 3}, {3}, [](const T64& x, const T64& fill) {
    const std::vector<std::size_t> pos{1, 3};
    return diff::scatter_rows(x, pos, 5, fill);
  });
  with_other("scatter_rows_fill", {3}, {2, 3}, [](const T64& fill, const T64& x) {
    const std::vector<std::size_t> pos{1, 3};
    return diff::scatter_rows(x, pos, 5, fill);
  });
  unary("mean_rows", {4, 3}, [](const T64& x) { return diff::mean_rows(x); });
  unary("slice_cols", {3, 5}, [](const T64& x) { return diff::slice_cols(x, 1, 3); });
  with_other("concat_cols", {3, 2}, {3, 4}, [](const T64& x, const T64& o) {
    return diff::concat_cols(std::vector<T64>{o, x, x});
  });
  with_other("row_cosine", {4, 5}, {4, 5}, [](const T64& x, const T64& o) { return diff::row_cosine(x, o); });

  c.push_back({"rt_backward", {5, 6}, [](std::uint64_t seed) -> Fn {
                 auto cb = vq::Codebook<double>::random(8, 6, seed + 2);
                 auto freeze = std::make_shared<vq::QuantizerFreeze>();
                 vq::quantize_rt(random({5, 6}, seed), cb, freeze.get());
                 return [cb, freeze, seed](const T64& x) {
                   freeze->start_replay();
                   return project(vq::quantize_rt(x, cb, freeze.get()).output, seed + 1);
                 };
               }});
  c.push_back({"sd_loss", {4, 8}, [](std::uint64_t seed) -> Fn {
                 auto content = random({4, 8}, seed + 2);
                 return [content](const T64& x) { return objectives::sd_loss(content, x); };
               }});
  c.push_back({"sp_loss", {4, 8}, [](std::uint64_t seed) -> Fn {
                 style::Init init(seed + 2);
                 auto hs = objectives::MlpHead<double>::create(8, init);
                 auto hp = objectives::MlpHead<double>::create(20, init);
                 auto lb = random({4, 20}, seed + 3);
                 return [hs, hp, lb](const T64& x) { return objectives::sp_loss(x, lb, hs, hp); };
               }});
  c.push_back({"encode_style", {6, 6}, [](std::uint64_t seed) -> Fn {
                 auto enc = style::StyleEncoder<double>::create(small_encoder(), seed + 2);
                 auto content = random({6, 8}, seed + 3);
                 style::VuvFlags vuv;
                 vuv.flags = {true, true, false, true, false, true};
                 auto freeze = std::make_shared<vq::QuantizerFreeze>();
                 style::encode_style(enc, random({6, 6}, seed), vuv, content, {}, freeze.get());
                 return [enc, content, vuv, freeze, seed](const T64& x) {
                   freeze->start_replay();
                   auto r = style::encode_style(enc, x, vuv, content, {}, freeze.get());
                   return diff::add(project(r.style.frames, seed + 1), r.quantizer.commitment_loss);
                 };
               }});
  return c;
}

}  // namespace

std::vector<std::string> grad_suite_names() {
  std::vector<std::string> names;
  for (const auto& c : checks()) names.push_back(c.name);
  names.push_back("sd_loss_content_zero");
  return names;
}

std::vector<GradOutcome> run_grad_suite(std::uint64_t seed, const std::string& corrupt) {
  std::vector<GradOutcome> out;
  for (const auto& c : checks()) {
    auto x = random(c.input, seed);
    if (c.away_from_zero) {
      auto v = x.mutable_data();
      for (auto& e : v) e = std::copysign(0.1 + std::abs(e), e);
    }
    Fn f = c.build(seed);
    if (c.name == corrupt) f = [f](const T64& in) { return f(diff::corrupt_backward(in, 1.5)); };
    const auto r = diff::grad_check(f, x, kGradStep);
    out.push_back({c.name, r.max_rel_error, r.max_rel_error < kGradTolerance});
  }
  // No gradient may reach the content side of sd_loss.
  auto content = random({4, 8}, seed + 5).clone(true);
  auto st = random({4, 8}, seed + 6).clone(true);
  auto loss = objectives::sd_loss(content, st);
  if (corrupt == "sd_loss_content_zero") loss = diff::add(loss, diff::scale(diff::sum(content), 1e-3));
  diff::backward(loss);
  double worst = 0.0;
  for (double g : content.grad()) worst = std::max(worst, std::abs(g));
  out.push_back({"sd_loss_content_zero", worst, worst == 0.0});
  return out;
}

}  // namespace spotlight::lab

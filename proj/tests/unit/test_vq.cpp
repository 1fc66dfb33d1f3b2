#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "spotlight/diff/grad_check.hpp"
#include "spotlight/diff/ops.hpp"
#include "spotlight/vq/quantizer.hpp"
#include "spotlight/vq/rotation.hpp"
#include "test_util.hpp"

using namespace spotlight;
using diff::Tensor;
using testing::random_tensor;
using T64 = Tensor<double>;

namespace {

vq::Codebook<double> book(std::size_t k, std::size_t d, std::vector<double> v) {
  return {T64::from({k, d}, std::move(v), true)};
}

// Independent oracle: exhaustive search in long double, lowest index on ties.
std::size_t oracle_nearest(const T64& codes, std::span<const double> e) {
  std::size_t best = 0;
  long double best_d = -1;
  for (std::size_t k = 0; k < codes.rows(); ++k) {
    long double acc = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const long double diff = static_cast<long double>(e[i]) - codes.at(k, i);
      acc += diff * diff;
    }
    if (best_d < 0 || acc < best_d) {
      best_d = acc;
      best = k;
    }
  }
  return best;
}

// Dense closed form of the rotation, built from scratch.
std::vector<std::vector<double>> dense_rotation(const std::vector<double>& e,
                                                const std::vector<double>& q) {
  const std::size_t d = e.size();
  double ne = 0, nq = 0;
  for (std::size_t i = 0; i < d; ++i) {
    ne += e[i] * e[i];
    nq += q[i] * q[i];
  }
  ne = std::sqrt(ne);
  nq = std::sqrt(nq);
  std::vector<double> eh(d), qh(d), r(d);
  double nr = 0;
  for (std::size_t i = 0; i < d; ++i) {
    eh[i] = e[i] / ne;
    qh[i] = q[i] / nq;
    r[i] = eh[i] + qh[i];
    nr += r[i] * r[i];
  }
  nr = std::sqrt(nr);
  for (auto& v : r) v /= nr;
  std::vector<std::vector<double>> m(d, std::vector<double>(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      m[i][j] = (i == j ? 1.0 : 0.0) - 2 * r[i] * r[j] + 2 * qh[i] * eh[j];
  return m;
}

std::vector<double> row_of(const T64& t, std::size_t r) {
  return {t.data().begin() + r * t.cols(), t.data().begin() + (r + 1) * t.cols()};
}

}  // namespace

TEST_CASE("nearest_code fixtures") {
  auto cb = vq::Codebook<double>::random(8, 4, 1);
  auto row3 = row_of(cb.codes, 3);
  CHECK(vq::nearest_code(cb, std::span<const double>(row3)).index == 3);
  auto two = book(2, 2, {0, 0, 1, 1});
  std::vector<double> e{0.9, 0.9};
  CHECK(vq::nearest_code(two, std::span<const double>(e)).index == 1);
  auto dup = book(3, 2, {1, 1, 0, 0, 0, 0});
  std::vector<double> z{0.1, -0.1};
  CHECK(vq::nearest_code(dup, std::span<const double>(z)).index == 1);
  std::vector<double> wrong{1, 2, 3};
  CHECK_THROWS_AS(vq::nearest_code(two, std::span<const double>(wrong)), diff::DimensionError);
  vq::Codebook<double> empty{T64::zeros({0, 2})};
  CHECK_THROWS(vq::nearest_code(empty, std::span<const double>(e)));
}

TEST_CASE("nearest_code matches the exhaustive oracle on 1000 queries") {
  auto cb = vq::Codebook<float>::random(128, 16, 3);
  auto codes64 = cb.codes.cast<double>();
  std::mt19937_64 rng(4);
  std::normal_distribution<float> dist(0.0f, 0.3f);
  for (int n = 0; n < 1000; ++n) {
    std::vector<float> q(16);
    for (auto& v : q) v = dist(rng);
    std::vector<double> q64(q.begin(), q.end());
    CHECK(vq::nearest_code(cb, std::span<const float>(q)).index == oracle_nearest(codes64, q64));
  }
}

TEST_CASE("rotation_align fixtures") {
  std::vector<double> ex{1, 0}, ey{0, 1};
  auto id = vq::rotation_align(ex, ex);
  auto a = id.apply(ex), b = id.apply(ey);
  CHECK(std::abs(a[0] - 1) < 1e-12);
  CHECK(std::abs(a[1]) < 1e-12);
  CHECK(std::abs(b[0]) < 1e-12);
  CHECK(std::abs(b[1] - 1) < 1e-12);

  std::vector<double> q{0, 2};
  auto rot = vq::rotation_align(ex, q);
  auto r1 = rot.apply(ex), r2 = rot.apply(ey);
  CHECK(std::abs(r1[0]) < 1e-12);
  CHECK(std::abs(r1[1] - 1) < 1e-12);
  // Also the 90 degree rotation on the second basis vector.
  CHECK(std::abs(r2[0] + 1) < 1e-12);
  CHECK(std::abs(r2[1]) < 1e-12);

  std::vector<double> tiny{1e-9, 0};
  CHECK_THROWS_AS(vq::rotation_align(tiny, q), vq::DegenerateInput);
  CHECK_THROWS_AS(vq::rotation_align(q, tiny), vq::DegenerateInput);
}

TEST_CASE("rotation preserves norms and aligns directions on random pairs") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist;
  auto draw = [&] {
    std::vector<double> v(16);
    for (auto& x : v) x = dist(rng);
    return v;
  };
  for (int trial = 0; trial < 100; ++trial) {
    auto e = draw(), q = draw(), x = draw();
    auto rot = vq::rotation_align(e, q);
    auto mapped = rot.apply(e);
    const double ne = vq::norm(e), nq = vq::norm(q);
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(mapped[i] / ne - q[i] / nq) < 1e-5);
    const double ratio = vq::norm(rot.apply(x)) / vq::norm(x);
    CHECK(ratio >= 1 - 1e-5);
    CHECK(ratio <= 1 + 1e-5);
    // R^T undoes R.
    auto back = rot.apply_transpose(rot.apply(x));
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(back[i] - x[i]) < 1e-9);
    // Matches the dense closed form.
    auto dense = dense_rotation(e, q);
    auto rx = rot.apply(x);
    for (std::size_t i = 0; i < 16; ++i) {
      double acc = 0;
      for (std::size_t j = 0; j < 16; ++j) acc += dense[i][j] * x[j];
      CHECK(std::abs(acc - rx[i]) < 1e-9);
    }
  }
}

TEST_CASE("antiparallel inputs use the reflection fallback") {
  std::vector<double> e{0.3, -1.2, 0.5, 2.0};
  std::vector<double> q{-0.6, 2.4, -1.0, -4.0};
  auto rot = vq::rotation_align(e, q);
  CHECK(rot.is_reflection());
  auto mapped = rot.apply(e);
  const double ne = vq::norm(e), nq = vq::norm(q);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(mapped[i] / ne - q[i] / nq) < 1e-5);
  std::vector<double> x{1, 2, 3, 4};
  CHECK(std::abs(vq::norm(rot.apply(x)) - vq::norm(x)) < 1e-5 * vq::norm(x));
}

TEST_CASE("quantize_rt fixtures") {
  auto cb = vq::Codebook<double>::random(16, 6, 9);
  auto e = T64::from({1, 6}, row_of(cb.codes, 5), true);
  auto out = vq::quantize_rt(e, cb);
  CHECK(out.indices[0] == 5);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(out.output.at(i) - e.at(i)) < 1e-12);
  auto w = random_tensor({1, 6}, 10);
  diff::backward(diff::sum(diff::mul(out.output, w)));
  auto g = e.grad();
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(g[i] - w.at(i)) < 1e-12);
  CHECK(!cb.codes.has_grad());

  CHECK_THROWS_AS(vq::quantize_rt(random_tensor({2, 5}, 1), cb), diff::DimensionError);
}

TEST_CASE("quantize_rt and quantize_ste agree in the forward pass") {
  auto cb = vq::Codebook<float>::random(32, 24, 12);
  auto e = random_tensor<float>({50, 24}, 13, 0.4);
  auto rt = vq::quantize_rt(e, cb);
  auto ste = vq::quantize_ste(e, cb);
  CHECK(rt.indices == ste.indices);
  double worst = 0;
  for (std::size_t i = 0; i < e.numel(); ++i) worst = std::max(worst, std::abs(double(rt.output.at(i)) - ste.output.at(i)));
  CHECK(worst < 1e-5);
  for (std::size_t t = 0; t < 50; ++t)
    for (std::size_t i = 0; i < 24; ++i) CHECK(ste.output.at(t, i) == cb.codes.at(ste.indices[t], i));
}

TEST_CASE("quantize_rt backward equals the frozen linear map") {
  auto cb = vq::Codebook<double>::random(16, 8, 14);
  auto e0 = random_tensor({3, 8}, 15, 0.5);
  auto w = random_tensor({3, 8}, 16);

  // Analytic gradient from the tape.
  auto e = e0.clone(true);
  diff::backward(diff::sum(diff::mul(vq::quantize_rt(e, cb).output, w)));
  auto tape_grad = e.grad();

  for (std::size_t t = 0; t < 3; ++t) {
    auto er = row_of(e0, t);
    auto idx = vq::nearest_code(cb, std::span<const double>(er)).index;
    auto q = row_of(cb.codes, idx);
    auto dense = dense_rotation(er, q);
    const double c0 = vq::norm(q) / vq::norm(er);
    // f(x) = w_t . (c0 R0 x); central differences on the frozen map.
    auto f = [&](const std::vector<double>& x) {
      double acc = 0;
      for (std::size_t i = 0; i < 8; ++i) {
        double rx = 0;
        for (std::size_t j = 0; j < 8; ++j) rx += dense[i][j] * x[j];
        acc += w.at(t, i) * c0 * rx;
      }
      return acc;
    };
    for (std::size_t j = 0; j < 8; ++j) {
      auto up = er, down = er;
      up[j] += 1e-3;
      down[j] -= 1e-3;
      const double numeric = (f(up) - f(down)) / 2e-3;
      CHECK(diff::relative_error(tape_grad[t * 8 + j], numeric) < 1e-3);
    }
  }

  // Same check through the recorded/replayed quantizer and the generic harness.
  vq::QuantizerFreeze freeze;
  vq::quantize_rt(e0, cb, &freeze);
  auto res = diff::grad_check(
      [&](const T64& x) {
        freeze.start_replay();
        return diff::sum(diff::mul(vq::quantize_rt(x, cb, &freeze).output, w));
      },
      e0);
  CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("quantize_ste fixtures") {
  auto cb = vq::Codebook<double>::random(8, 4, 17);
  auto e = T64::from({1, 4}, row_of(cb.codes, 2), true);
  auto out = vq::quantize_ste(e, cb);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.output.at(i) == e.at(i));
  auto batch = random_tensor({5, 4}, 18, 1.0, true);
  diff::backward(diff::sum(vq::quantize_ste(batch, cb).output));
  for (double g : batch.grad()) CHECK(g == 1.0);
}

TEST_CASE("rotation-trick gradient differs in direction from straight-through") {
  // e perpendicular to its nearest code.
  auto cb = book(2, 2, {0, 1, 0, -3});
  auto w = T64::from({1, 2}, {0.7, 0.2});
  auto e_rt = T64::from({1, 2}, {1.0, 0.0}, true);
  auto e_ste = T64::from({1, 2}, {1.0, 0.0}, true);
  diff::backward(diff::sum(diff::mul(vq::quantize_rt(e_rt, cb).output, w)));
  diff::backward(diff::sum(diff::mul(vq::quantize_ste(e_ste, cb).output, w)));
  auto a = e_rt.grad(), b = e_ste.grad();
  const double cos = (a[0] * b[0] + a[1] * b[1]) /
                     (std::hypot(a[0], a[1]) * std::hypot(b[0], b[1]));
  CHECK(cos < 1 - 1e-6);
}

TEST_CASE("degenerate rows fall back to straight-through") {
  auto cb = vq::Codebook<double>::random(4, 3, 19);
  auto e = T64::from({2, 3}, {0, 0, 0, 0.5, -0.2, 0.1}, true);
  auto out = vq::quantize_rt(e, cb);
  CHECK(out.degenerate_rows == 1);
  diff::backward(diff::sum(out.output));
  auto g = e.grad();
  for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("rvq exact representation and zero loss") {
  auto first = vq::Codebook<double>::random(4, 3, 20);
  auto with_zero = [](std::uint64_t seed) {
    auto cb = vq::Codebook<double>::random(4, 3, seed);
    for (std::size_t i = 0; i < 3; ++i) cb.codes.mutable_data()[i] = 0.0;
    return cb;
  };
  vq::RvqStack<double> stack{{first, with_zero(21), with_zero(22), with_zero(23)}, 0.25};
  auto e = T64::from({2, 3}, {first.codes.at(1, 0), first.codes.at(1, 1), first.codes.at(1, 2),
                              first.codes.at(3, 0), first.codes.at(3, 1), first.codes.at(3, 2)});
  for (auto mode : {vq::GradientMode::kRotation, vq::GradientMode::kStraightThrough}) {
    auto out = vq::rvq_forward(stack, e, mode);
    for (std::size_t l = 1; l < out.residual_norms.size(); ++l) CHECK(out.residual_norms[l] == 0.0);
    for (std::size_t i = 0; i < e.numel(); ++i) CHECK(std::abs(out.quantized.at(i) - e.at(i)) < 1e-12);
    CHECK(vq::rvq_loss(out).item() == 0.0);
    CHECK(out.indices[0][0] == 1);
    CHECK(out.indices[1][0] == 3);
  }
}

TEST_CASE("rvq residual norms are non-increasing and beat single-layer VQ") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto stack = vq::RvqStack<float>::random(4, 32, 16, 1000 + seed);
    auto e = random_tensor<float>({12, 16}, seed);
    auto out = vq::rvq_forward(stack, e, vq::GradientMode::kRotation);
    REQUIRE(out.residual_norms.size() == 5);
    for (std::size_t l = 1; l < 5; ++l) CHECK(out.residual_norms[l] <= out.residual_norms[l - 1] + 1e-6);
    vq::RvqStack<float> single{{stack.layers[0]}, 0.25};
    auto one = vq::rvq_forward(single, e, vq::GradientMode::kRotation);
    CHECK(out.residual_norms.back() <= one.residual_norms.back() + 1e-6);
  }
}

TEST_CASE("rvq_loss hand-computed depth-2 fixture") {
  // Layer 1 picks (1,0) and (0,1); residuals (0.2,0.1), (0.2,-0.3).
  // Layer 2 picks (0.5,0) and (0,-0.5); residuals (-0.3,0.1), (0.2,0.2).
  // Per-layer mean squared residual: 0.18/4 = 0.045 each, sum 0.09.
  // loss = 0.09 + 0.25 * 0.09 = 0.1125.
  vq::RvqStack<double> stack{{book(2, 2, {1, 0, 0, 1}), book(2, 2, {0.5, 0, 0, -0.5})}, 0.25};
  auto e = T64::from({2, 2}, {1.2, 0.1, 0.2, 0.7});
  auto out = vq::rvq_forward(stack, e, vq::GradientMode::kRotation);
  CHECK(std::abs(out.codebook_loss.item() - 0.09) < 1e-5);
  CHECK(std::abs(out.commitment_loss.item() - 0.09) < 1e-5);
  CHECK(std::abs(vq::rvq_loss(out).item() - 0.1125) < 1e-5);
  CHECK(out.indices[0] == std::vector<std::size_t>{0, 0});
  CHECK(out.indices[1] == std::vector<std::size_t>{1, 1});
}

TEST_CASE("rvq_loss is quadratic in e for zero codebooks") {
  vq::RvqStack<double> stack{{book(1, 3, {0, 0, 0}), book(1, 3, {0, 0, 0}), book(1, 3, {0, 0, 0}),
                              book(1, 3, {0, 0, 0})}, 0.25};
  auto e = random_tensor({4, 3}, 30);
  auto e2 = T64::from({4, 3}, [&] {
    std::vector<double> v(e.data().begin(), e.data().end());
    for (auto& x : v) x *= 2;
    return v;
  }());
  const double l1 = vq::rvq_loss(vq::rvq_forward(stack, e, vq::GradientMode::kRotation)).item();
  const double l2 = vq::rvq_loss(vq::rvq_forward(stack, e2, vq::GradientMode::kRotation)).item();
  CHECK(l2 == doctest::Approx(4 * l1).epsilon(1e-12));
}

TEST_CASE("rvq loss gradients route to codebooks and encoder separately") {
  auto stack = vq::RvqStack<double>::random(4, 8, 5, 31);
  auto e = random_tensor({6, 5}, 32, 1.0, true);
  auto out = vq::rvq_forward(stack, e, vq::GradientMode::kRotation);
  diff::backward(out.codebook_loss);
  CHECK(!e.has_grad());
  bool any = false;
  for (const auto& l : stack.layers) any = any || l.codes.has_grad();
  CHECK(any);

  auto stack2 = vq::RvqStack<double>::random(4, 8, 5, 31);
  auto e2 = random_tensor({6, 5}, 32, 1.0, true);
  auto out2 = vq::rvq_forward(stack2, e2, vq::GradientMode::kRotation);
  diff::backward(out2.commitment_loss);
  CHECK(e2.has_grad());
  for (const auto& l : stack2.layers) CHECK(!l.codes.has_grad());
}

TEST_CASE("rvq checkpoint round-trip") {
  auto stack = vq::RvqStack<float>::random(4, 16, 8, 40, 0.3);
  auto dir = std::filesystem::temp_directory_path() / "spotlight_rvq_ckpt";
  vq::save_rvq(stack, dir);
  auto back = vq::load_rvq(dir);
  CHECK(back.depth() == 4);
  CHECK(back.commitment_weight == 0.3);
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t i = 0; i < stack.layers[l].codes.numel(); ++i)
      CHECK(back.layers[l].codes.at(i) == stack.layers[l].codes.at(i));
}

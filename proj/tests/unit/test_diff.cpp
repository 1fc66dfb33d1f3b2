#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "spotlight/diff/adamw.hpp"
#include "spotlight/diff/grad_check.hpp"
#include "spotlight/diff/ops.hpp"
#include "spotlight/diff/serialize.hpp"
#include "test_util.hpp"

using namespace spotlight;
using diff::Tensor;
using testing::project;
using testing::random_tensor;
using T64 = Tensor<double>;

namespace {

void check_close(std::span<const double> got, std::vector<double> want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

void check_abs(std::span<const double> got, std::vector<double> want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= tol);
}

}  // namespace

TEST_CASE("matmul fixtures") {
  auto id = T64::from({2, 2}, {1, 0, 0, 1});
  auto m = T64::from({2, 2}, {1, 2, 3, 4});
  check_abs(diff::matmul(id, m).data(), {1, 2, 3, 4}, 0);
  auto row = T64::from({1, 2}, {1, 0});
  auto col = T64::from({2, 1}, {0, 5});
  check_abs(diff::matmul(row, col).data(), {0}, 0);
  CHECK_THROWS_AS(diff::matmul(m, row), diff::DimensionError);
  try {
    diff::matmul(m, row);
  } catch (const diff::DimensionError& e) {
    CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
    CHECK(std::string(e.what()).find("[1x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum(a*b) wrt a") {
  auto b = random_tensor({3, 3}, 11);
  auto res = diff::grad_check(
      [&](const T64& a) { return diff::sum(diff::matmul(a, b)); }, random_tensor({3, 3}, 10));
  CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("softmax fixtures") {
  check_abs(diff::softmax_lastdim(T64::from({3}, {0, 0, 0})).data(), {1.0 / 3, 1.0 / 3, 1.0 / 3},
            1e-12);
  check_abs(diff::softmax_lastdim(T64::from({3}, {1000, 0, 0})).data(), {1, 0, 0}, 1e-12);
  check_abs(diff::softmax_lastdim(T64::from({3}, {1, 2, 3})).data(), {0.0900, 0.2447, 0.6652},
            1e-3);
}

TEST_CASE("elementwise fixtures") {
  CHECK(diff::gelu(T64::scalar(0)).item() == 0.0);
  // Independent evaluation of the tanh form.
  const double x = 3.0;
  const double want = 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
  CHECK(std::abs(want - 2.9964) < 1e-3);
  CHECK(std::abs(diff::gelu(T64::scalar(3)).item() - want) < 1e-12);
  check_abs(diff::add(T64::from({2}, {1, 2}), T64::from({2}, {3, 4})).data(), {4, 6}, 0);
  check_abs(diff::mul(T64::scalar(2), T64::from({2}, {3, 4})).data(), {6, 8}, 0);
  CHECK_THROWS_AS(diff::add(T64::from({2}, {1, 2}), T64::from({3}, {1, 2, 3})),
                  diff::DimensionError);
}

TEST_CASE("layer_norm fixtures") {
  auto gain = T64::full({2}, 1.0);
  auto bias = T64::zeros({2});
  check_abs(diff::layer_norm(T64::from({1, 2}, {5, 5}), gain, bias).data(), {0, 0}, 1e-12);
  check_abs(diff::layer_norm(T64::from({1, 2}, {1, 3}), gain, bias).data(), {-1, 1}, 1e-3);
  auto g = random_tensor({5}, 3);
  auto b = random_tensor({5}, 4);
  auto res = diff::grad_check(
      [&](const T64& x) { return project(diff::layer_norm(x, g, b), 5); },
      random_tensor({4, 5}, 6));
  CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("conv1d fixtures") {
  auto x = random_tensor({8, 4}, 20);
  std::vector<double> delta(7 * 4, 0.0);
  for (int c = 0; c < 4; ++c) delta[3 * 4 + c] = 1.0;
  auto k = T64::from({7, 4}, delta);
  check_abs(diff::conv1d(x, k, diff::Conv1dMode::kDepthwise7).data(),
            std::vector<double>(x.data().begin(), x.data().end()), 0);
  auto w = random_tensor({4, 3}, 21);
  auto pw = diff::conv1d(x, w, diff::Conv1dMode::kPointwise);
  auto mm = diff::matmul(x, w);
  check_abs(pw.data(), std::vector<double>(mm.data().begin(), mm.data().end()), 0);
  CHECK_THROWS_AS(diff::conv1d(x, random_tensor({7, 3}, 1), diff::Conv1dMode::kDepthwise7),
                  diff::DimensionError);
  CHECK_THROWS_AS(diff::conv1d(x, random_tensor({3, 3}, 1), diff::Conv1dMode::kPointwise),
                  diff::DimensionError);

  auto kern = random_tensor({7, 4}, 22);
  auto res = diff::grad_check(
      [&](const T64& in) {
        return project(diff::conv1d(in, kern, diff::Conv1dMode::kDepthwise7), 23);
      },
      x);
  CHECK(res.max_rel_error < 1e-3);
  auto res_k = diff::grad_check(
      [&](const T64& kk) {
        return project(diff::conv1d(x, kk, diff::Conv1dMode::kDepthwise7), 23);
      },
      kern);
  CHECK(res_k.max_rel_error < 1e-3);
}

TEST_CASE("backward fixtures and errors") {
  auto x = T64::from({2, 2}, {1, 2, 3, 4}, true);
  diff::backward(diff::sum(x));
  check_abs(x.grad(), {1, 1, 1, 1}, 0);

  auto y = T64::from({2}, {1, 2}, true);
  auto loss = diff::sum(diff::square(y));
  diff::backward(loss);
  check_abs(y.grad(), {2, 4}, 0);
  CHECK_THROWS_AS(diff::backward(loss), diff::GraphError);

  CHECK_THROWS_AS(diff::backward(diff::square(y)), diff::GraphError);
  auto detached = diff::sum(y.detach());
  CHECK_THROWS_AS(diff::backward(detached), diff::GraphError);
}

TEST_CASE("composite attention + MLP graph matches finite differences") {
  auto wq = random_tensor({6, 6}, 31, 0.4), wk = random_tensor({6, 6}, 32, 0.4),
       wv = random_tensor({6, 6}, 33, 0.4), w1 = random_tensor({6, 8}, 34, 0.4),
       w2 = random_tensor({8, 3}, 35, 0.4), b1 = random_tensor({8}, 36);
  auto f = [&](const T64& x) {
    auto q = diff::matmul(x, wq);
    auto k = diff::matmul(x, wk);
    auto v = diff::matmul(x, wv);
    auto att = diff::softmax_lastdim(diff::scale(diff::matmul(q, diff::transpose(k)), 1 / std::sqrt(6.0)));
    auto h = diff::add(diff::matmul(att, v), x);
    auto y = diff::matmul(diff::gelu(diff::add_bias(diff::matmul(h, w1), b1)), w2);
    return project(y, 37);
  };
  CHECK(diff::grad_check(f, random_tensor({5, 6}, 30)).max_rel_error < 1e-3);
}

TEST_CASE("grad_check fixtures") {
  auto x = random_tensor({3, 4}, 40);
  CHECK(diff::grad_check([](const T64& in) { return diff::sum(in); }, x).max_rel_error < 1e-9);

  auto p = x.clone(true);
  diff::backward(diff::sum(diff::softmax_lastdim(p)));
  for (double g : p.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("every primitive passes grad_check on three seeds") {
  using Fn = std::function<T64(const T64&)>;
  struct Case {
    const char* name;
    diff::Shape shape;
    Fn f;
  };
  auto other = random_tensor({4, 5}, 99);
  auto vec5 = random_tensor({5}, 98);
  std::vector<std::size_t> idx{2, 0, 2, 3};
  std::vector<std::size_t> pos{1, 4};
  std::vector<Case> cases{
      {"add", {4, 5}, [&](const T64& x) { return project(diff::add(x, other), 1); }},
      {"sub", {4, 5}, [&](const T64& x) { return project(diff::sub(other, x), 1); }},
      {"mul", {4, 5}, [&](const T64& x) { return project(diff::mul(x, other), 1); }},
      {"scale", {4, 5}, [&](const T64& x) { return project(diff::scale(x, -1.7), 1); }},
      {"neg", {4, 5}, [&](const T64& x) { return project(diff::neg(x), 1); }},
      {"square", {4, 5}, [&](const T64& x) { return project(diff::square(x), 1); }},
      {"gelu", {4, 5}, [&](const T64& x) { return project(diff::gelu(x), 1); }},
      {"mean", {4, 5}, [&](const T64& x) { return diff::mean(diff::square(x)); }},
      {"matmul", {4, 5}, [&](const T64& x) { return project(diff::matmul(x, diff::transpose(other)), 1); }},
      {"softmax", {4, 5}, [&](const T64& x) { return project(diff::softmax_lastdim(x), 1); }},
      {"layer_norm", {4, 5}, [&](const T64& x) { return project(diff::layer_norm(x, vec5, vec5), 1); }},
      {"add_bias", {5}, [&](const T64& b) { return project(diff::add_bias(other, b), 1); }},
      {"gather_rows", {4, 5}, [&](const T64& x) { return project(diff::gather_rows(x, idx), 1); }},
      {"scatter_rows", {2, 5}, [&](const T64& x) { return project(diff::scatter_rows(x, pos, 6, vec5), 1); }},
      {"scatter_fill", {5}, [&](const T64& f) { return project(diff::scatter_rows(diff::slice_cols(other, 0, 5), std::vector<std::size_t>{0, 1, 2, 5}, 7, f), 1); }},
      {"mean_rows", {4, 5}, [&](const T64& x) { return project(diff::mean_rows(x), 1); }},
      {"slice_concat", {4, 5}, [&](const T64& x) { return project(diff::concat_cols<double>({diff::slice_cols(x, 3, 2), diff::slice_cols(x, 0, 3)}), 1); }},
      {"row_cosine", {4, 5}, [&](const T64& x) { return project(diff::row_cosine(x, other), 1); }},
      {"reshape", {4, 5}, [&](const T64& x) { return project(diff::reshape(x, {5, 4}), 1); }},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      auto res = diff::grad_check(c.f, random_tensor(c.shape, 1000 + seed));
      INFO(c.name << " seed " << seed << " err " << res.max_rel_error);
      CHECK(res.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("softmax rows sum to one and stay in [0, 1]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto y = diff::softmax_lastdim(random_tensor<float>({6, 9}, seed, 50.0));
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 9; ++c) {
        CHECK(y.at(r, c) >= 0.0f);
        CHECK(y.at(r, c) <= 1.0f);
        total += y.at(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("backward is additive over independent graphs") {
  auto x0 = random_tensor({3, 4}, 50);
  auto w = random_tensor({4, 2}, 51);
  auto g1 = [&](const T64& x) { return project(diff::gelu(diff::matmul(x, w)), 52); };
  auto g2 = [&](const T64& x) { return project(diff::softmax_lastdim(x), 53); };
  auto a = x0.clone(true);
  diff::backward(g1(a));
  auto b = x0.clone(true);
  diff::backward(g2(b));
  auto c = x0.clone(true);
  diff::backward(diff::add(g1(c), g2(c)));
  auto ga = a.grad(), gb = b.grad(), gc = c.grad();
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(std::abs(gc[i] - ga[i] - gb[i]) < 1e-12);
}

TEST_CASE("primitives stay finite for |x| <= 1e4") {
  auto x = random_tensor<float>({4, 7}, 60, 1e4);
  for (auto& v : x.mutable_data()) v = std::clamp(v, -1e4f, 1e4f);
  auto gain = Tensor<float>::full({7}, 1.0f);
  auto bias = Tensor<float>::zeros({7});
  std::vector<Tensor<float>> outs{diff::gelu(x), diff::softmax_lastdim(x), diff::layer_norm(x, gain, bias),
                                  diff::square(x), diff::row_cosine(x, x)};
  for (const auto& o : outs)
    for (float v : o.data()) CHECK(std::isfinite(v));
}

TEST_CASE("adamw fixtures") {
  std::vector<Tensor<float>> params{Tensor<float>::from({2}, {0.5f, -1.0f}, true)};
  auto state = diff::make_adamw(params, {.lr = 0.1, .weight_decay = 0.0});
  params[0].mutable_grad();  // zero gradient
  diff::adamw_step(params, state);
  CHECK(params[0].at(0) == 0.5f);
  CHECK(params[0].at(1) == -1.0f);

  std::vector<Tensor<float>> p{Tensor<float>::scalar(0.0f, true)};
  auto st = diff::make_adamw(p, {.lr = 0.1, .weight_decay = 0.0});
  p[0].mutable_grad()[0] = 1.0f;
  diff::adamw_step(p, st);
  CHECK(std::abs(p[0].item() + 0.1) < 1e-6);
  const float after_one = p[0].item();
  diff::adamw_step(p, st);  // same gradient again
  CHECK(p[0].item() < after_one);
  CHECK(st.t == 2);

  std::vector<Tensor<float>> wrong{Tensor<float>::zeros({3}, true), Tensor<float>::zeros({1}, true)};
  CHECK_THROWS_AS(diff::adamw_step(wrong, st), diff::DimensionError);
}

TEST_CASE("SPT1 tensor blocks round-trip") {
  auto t = random_tensor<float>({3, 2, 2}, 70);
  std::stringstream buf;
  diff::write_tensor(buf, t);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "SPT1");
  CHECK(bytes.size() == 4 + 4 + 3 * 4 + 12 * 4);
  CHECK(static_cast<unsigned char>(bytes[4]) == 3);
  auto back = diff::read_tensor(buf);
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back.at(i) == t.at(i));
  std::stringstream bad("XXXX");
  CHECK_THROWS(diff::read_tensor(bad));
}

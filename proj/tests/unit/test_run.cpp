#include <algorithm>
#include <cstdlib>
#include <set>

#include "doctest.h"
#include "spotlight/lab/grad_suite.hpp"
#include "spotlight/lab/run.hpp"

using namespace spotlight;
using nlohmann::json;

TEST_CASE("grad suite passes on the default seed and covers every primitive") {
  const auto results = lab::run_grad_suite(7);
  CHECK(results.size() == lab::grad_suite_names().size());
  std::set<std::string> names;
  for (const auto& r : results) {
    INFO(r.name << " rel err " << r.max_rel_error);
    CHECK(r.passed);
    names.insert(r.name);
  }
  for (const char* op : {"add", "sub", "mul", "scale", "neg", "square", "abs", "gelu", "sum",
                         "mean", "matmul", "transpose", "reshape", "add_bias", "softmax_lastdim",
                         "layer_norm", "conv1d_pointwise", "conv1d_depthwise7", "gather_rows",
                         "scatter_rows", "mean_rows", "slice_cols", "concat_cols", "row_cosine",
                         "rt_backward", "sd_loss", "sp_loss", "encode_style",
                         "sd_loss_content_zero"})
    CHECK(names.count(op) == 1);
}

TEST_CASE("grad suite flags a corrupted backward") {
  for (const char* target : {"gelu", "rt_backward", "encode_style", "sd_loss_content_zero"}) {
    const auto results = lab::run_grad_suite(7, target);
    for (const auto& r : results) {
      INFO(target << " / " << r.name);
      CHECK(r.passed == (r.name != target));
    }
  }
}

TEST_CASE("run config defaults and round trip") {
  const auto c = lab::parse_run_config(json::object());
  CHECK(c.seed == 7);
  CHECK(c.steps == 500);
  CHECK(c.train.batch_size == 8);
  CHECK(c.train.optimizer.lr == doctest::Approx(1e-3));
  CHECK(c.train.weights.sd == doctest::Approx(0.02));
  CHECK(c.train.weights.adv == doctest::Approx(0.05));
  CHECK(c.train.model.style.codebook_size == 128);
  CHECK(c.train.model.style.beta_mask == doctest::Approx(0.02));

  const auto j = json::parse(R"({"seed": 3, "mode": "-SP-SD", "steps": 2,
      "style": {"dim": 32}, "synth": {"n_contents": 5}, "optimizer": {"lr": 0.01}})");
  const auto p = lab::parse_run_config(j);
  CHECK(p.seed == 3);
  CHECK(p.synth.seed == 3);
  CHECK(p.train.seed == 3);
  CHECK(p.train.mode == lab::TrainMode::kNoSpNoSd);
  CHECK(p.train.model.style.dim == 32);
  CHECK(p.synth.n_contents == 5);
  CHECK(p.train.optimizer.lr == doctest::Approx(0.01));
  CHECK(lab::run_config_json(lab::parse_run_config(lab::run_config_json(p))) ==
        lab::run_config_json(p));
}

TEST_CASE("run config errors carry the key path") {
  auto path_of = [](const char* text) {
    try {
      lab::parse_run_config(json::parse(text));
    } catch (const lab::ConfigError& e) {
      return e.path();
    }
    return std::string("<none>");
  };
  CHECK(path_of(R"({"stpes": 1})") == "stpes");
  CHECK(path_of(R"({"style": {"dimm": 1}})") == "style.dimm");
  CHECK(path_of(R"({"optimizer": {"lr": "fast"}})") == "optimizer.lr");
  CHECK(path_of(R"({"mode": "fastest"})") == "mode");
  CHECK(path_of(R"({"batch_size": -1})") == "batch_size");
  CHECK(path_of(R"({"style": {"dim": 0}})") == "style");
  CHECK(path_of(R"([1, 2])") == "<root>");
}

TEST_CASE("SPOTLIGHT_SEED overrides the config seed") {
  auto c = lab::parse_run_config(json::object());
  setenv("SPOTLIGHT_SEED", "42", 1);
  lab::apply_seed_override(c);
  CHECK(c.seed == 42);
  CHECK(c.train.seed == 42);
  CHECK(c.synth.seed == 42);
  setenv("SPOTLIGHT_SEED", "x", 1);
  CHECK_THROWS_AS(lab::apply_seed_override(c), lab::ConfigError);
  unsetenv("SPOTLIGHT_SEED");
}

TEST_CASE("ablation report has one row per mode") {
  const auto data = lab::generate_dataset({});
  lab::TrainOptions opt;
  opt.model.style.dim = 16;
  opt.model.style.codebook_size = 8;
  opt.model.style.uf_blocks = 1;
  opt.model.style.conv_blocks = 1;
  opt.model.decoder_blocks = 1;
  const auto rows = lab::run_ablation(data, opt, 2);
  REQUIRE(rows.size() == 8);
  const auto j = lab::ablation_json(rows, 7, 2);
  CHECK(j["rows"].size() == 8);
  for (const auto& r : j["rows"]) {
    CHECK(r["finite"].get<bool>());
    CHECK(r["steps"] == 2);
    for (const char* key : {"quantization_error", "recon_l1", "orthogonality", "utilization"})
      CHECK(r.contains(key));
  }
  CHECK(j.contains("rt_vs_ste"));
  const auto table = lab::ablation_table(rows);
  CHECK(std::count(table.begin(), table.end(), '\n') == 9);
}

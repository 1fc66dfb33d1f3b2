#include "spotlight/lab/run.hpp"

#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <sstream>

#include "spotlight/objectives/losses.hpp"

namespace spotlight::lab {

using nlohmann::json;

ConfigError::ConfigError(std::string path, const std::string& message)
    : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}

namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Every key of `given` must exist in `allowed`; objects are checked recursively.
void reject_unknown(const json& given, const json& allowed, const std::string& prefix) {
  if (!given.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, value] : given.items()) {
    const auto path = join(prefix, key);
    if (!allowed.contains(key)) throw ConfigError(path, "unknown key");
    if (allowed[key].is_object()) reject_unknown(value, allowed[key], path);
  }
}

template <typename T>
void read(const json& j, const std::string& key, const std::string& prefix, T& dst) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  const auto path = join(prefix, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0))
      throw ConfigError(path, "expected a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
  } else {
    if (!v.is_array()) throw ConfigError(path, "expected an array");
    for (const auto& e : v)
      if (!e.is_number()) throw ConfigError(path, "expected an array of numbers");
  }
  dst = v.get<T>();
}

json synth_json(const SynthSpec& s) {
  return {{"n_styles", s.n_styles},         {"f0_bases", s.f0_bases},
          {"vibrato_depth", s.vibrato_depth}, {"n_contents", s.n_contents},
          {"min_frames", s.min_frames},     {"max_frames", s.max_frames},
          {"eval_fraction", s.eval_fraction}, {"seed", s.seed}};
}

}  // namespace

json run_config_json(const RunConfig& c) {
  const auto& t = c.train;
  return {{"seed", c.seed},
          {"steps", c.steps},
          {"mode", mode_name(t.mode)},
          {"out", c.out},
          {"batch_size", t.batch_size},
          {"eval_every", t.eval_every},
          {"restart_dead_codes", t.restart_dead_codes},
          {"restart_after", t.restart_after},
          {"decoder_blocks", t.model.decoder_blocks},
          {"synth", synth_json(c.synth)},
          {"style", style::config_json(t.model.style)},
          {"loss_weights",
           {{"rvq", t.weights.rvq}, {"adv", t.weights.adv}, {"sd", t.weights.sd}, {"sp", t.weights.sp}}},
          {"optimizer",
           {{"lr", t.optimizer.lr},
            {"beta1", t.optimizer.beta1},
            {"beta2", t.optimizer.beta2},
            {"eps", t.optimizer.eps},
            {"weight_decay", t.optimizer.weight_decay}}}};
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  reject_unknown(j, run_config_json(c), "");

  read(j, "seed", "", c.seed);
  c.synth.seed = c.seed;
  read(j, "steps", "", c.steps);
  if (c.steps == 0) throw ConfigError("steps", "must be at least 1");
  read(j, "out", "", c.out);
  std::string mode = mode_name(c.train.mode);
  read(j, "mode", "", mode);
  const auto parsed = parse_mode(mode);
  if (!parsed) throw ConfigError("mode", "unknown mode '" + mode + "'");
  auto& t = c.train;
  t.mode = *parsed;
  t.seed = c.seed;
  read(j, "batch_size", "", t.batch_size);
  if (t.batch_size == 0) throw ConfigError("batch_size", "must be at least 1");
  read(j, "eval_every", "", t.eval_every);
  read(j, "restart_dead_codes", "", t.restart_dead_codes);
  read(j, "restart_after", "", t.restart_after);
  read(j, "decoder_blocks", "", t.model.decoder_blocks);

  if (j.contains("synth")) {
    const auto& s = j["synth"];
    auto& d = c.synth;
    read(s, "n_styles", "synth", d.n_styles);
    read(s, "f0_bases", "synth", d.f0_bases);
    read(s, "vibrato_depth", "synth", d.vibrato_depth);
    read(s, "n_contents", "synth", d.n_contents);
    read(s, "min_frames", "synth", d.min_frames);
    read(s, "max_frames", "synth", d.max_frames);
    read(s, "eval_fraction", "synth", d.eval_fraction);
    read(s, "seed", "synth", d.seed);
  }
  try {
    c.synth.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("synth", e.what());
  }

  if (j.contains("style")) {
    const auto& s = j["style"];
    auto& d = t.model.style;
    read(s, "dim", "style", d.dim);
    read(s, "n_mels", "style", d.n_mels);
    read(s, "uf_blocks", "style", d.uf_blocks);
    read(s, "rvq_depth", "style", d.rvq_depth);
    read(s, "codebook_size", "style", d.codebook_size);
    read(s, "commitment_weight", "style", d.commitment_weight);
    read(s, "beta_mask", "style", d.beta_mask);
    read(s, "attention_heads", "style", d.attention_heads);
    read(s, "conv_blocks", "style", d.conv_blocks);
  }
  try {
    t.model.style.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("style", e.what());
  }

  if (j.contains("loss_weights")) {
    const auto& w = j["loss_weights"];
    read(w, "rvq", "loss_weights", t.weights.rvq);
    read(w, "adv", "loss_weights", t.weights.adv);
    read(w, "sd", "loss_weights", t.weights.sd);
    read(w, "sp", "loss_weights", t.weights.sp);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    read(o, "lr", "optimizer", t.optimizer.lr);
    read(o, "beta1", "optimizer", t.optimizer.beta1);
    read(o, "beta2", "optimizer", t.optimizer.beta2);
    read(o, "eps", "optimizer", t.optimizer.eps);
    read(o, "weight_decay", "optimizer", t.optimizer.weight_decay);
  }
  return c;
}

void apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("SPOTLIGHT_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  const auto v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw ConfigError("SPOTLIGHT_SEED", "not an unsigned integer");
  cfg.seed = v;
  cfg.train.seed = v;
  cfg.synth.seed = v;
}

json AblationRow::to_json() const {
  return {{"mode", mode_name(mode)},
          {"steps", steps},
          {"finite", finite},
          {"error", error},
          {"final_total_loss", final_total},
          {"quantization_error", final.quantization_error},
          {"recon_l1", final.recon_l1},
          {"orthogonality", final.orthogonality},
          {"orthogonality_initial", initial.orthogonality},
          {"utilization", final.utilization},
          {"vuv_f1", final.vuv_f1},
          {"rmse_f0_proxy", final.rmse_f0_proxy}};
}

AblationRow summarize(const Trainer& trainer, bool finite, std::string error) {
  AblationRow row;
  row.mode = trainer.options().mode;
  row.steps = static_cast<std::size_t>(trainer.steps_done());
  row.finite = finite;
  row.error = std::move(error);
  const auto& h = trainer.history();
  if (!h.empty()) {
    row.initial = h.front().metrics;
    row.final = h.back().metrics;
    row.final_total = h.back().loss.total;
  }
  if (!std::isfinite(row.final_total)) row.finite = false;
  return row;
}

AblationRow run_mode(const Dataset& data, TrainOptions options, std::size_t steps) {
  Trainer trainer(data, options);
  try {
    trainer.run(steps);
  } catch (const objectives::TrainingAborted& e) {
    return summarize(trainer, false, e.what());
  }
  return summarize(trainer, true);
}

std::vector<AblationRow> run_ablation(const Dataset& data, const TrainOptions& base,
                                      std::size_t steps,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (auto mode : all_modes()) {
    auto options = base;
    options.mode = mode;
    rows.push_back(run_mode(data, options, steps));
    if (on_row) on_row(rows.back());
  }
  return rows;
}

json ablation_json(const std::vector<AblationRow>& rows, std::uint64_t seed, std::size_t steps) {
  json out{{"seed", seed}, {"steps", steps}, {"rows", json::array()}};
  const AblationRow* rt = nullptr;
  const AblationRow* ste = nullptr;
  for (const auto& r : rows) {
    out["rows"].push_back(r.to_json());
    if (r.mode == TrainMode::kFull) rt = &r;
    if (r.mode == TrainMode::kNoRt) ste = &r;
  }
  // Reported only; the toy scale does not guarantee a direction.
  if (rt && ste)
    out["rt_vs_ste"] = {{"rt_quantization_error", rt->final.quantization_error},
                        {"ste_quantization_error", ste->final.quantization_error},
                        {"rt_not_worse", rt->final.quantization_error <= ste->final.quantization_error}};
  return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(11) << "mode" << std::right << std::setw(8) << "finite"
     << std::setw(10) << "quant_err" << std::setw(10) << "recon_l1" << std::setw(12) << "orthog"
     << std::setw(9) << "vuv_f1" << std::setw(10) << "rmse_f0" << "  utilization\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(11) << mode_name(r.mode) << std::right << std::setw(8)
       << (r.finite ? "yes" : "NO") << std::fixed << std::setprecision(4) << std::setw(10)
       << r.final.quantization_error << std::setw(10) << r.final.recon_l1 << std::setprecision(6)
       << std::setw(12) << r.final.orthogonality << std::setprecision(3) << std::setw(9)
       << r.final.vuv_f1 << std::setprecision(2) << std::setw(10) << r.final.rmse_f0_proxy << " ";
    for (double u : r.final.utilization) os << ' ' << std::setprecision(3) << u;
    os << '\n';
  }
  return os.str();
}

}  // namespace spotlight::lab

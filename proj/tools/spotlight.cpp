#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "spotlight/audio/feature_file.hpp"
#include "spotlight/audio/features.hpp"
#include "spotlight/audio/pitch.hpp"
#include "spotlight/audio/wav.hpp"
#include "spotlight/lab/grad_suite.hpp"
#include "spotlight/lab/run.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spotlight;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;

// Raised for bad input; becomes exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

int cmd_featurize(const fs::path& wav, const fs::path& out) {
  audio::Waveform wave;
  try {
    wave = audio::load_wav(wav);
  } catch (const audio::AudioError& e) {
    throw InputError(std::string("featurize: ") + e.what());
  }
  const auto mel = audio::mel_spectrogram(wave);
  const auto pitch = audio::estimate_f0_vuv(wave);
  const std::size_t frames = mel.frames.rows;

  audio::FrameMatrix f0(frames, 1);
  for (std::size_t t = 0; t < frames; ++t) f0.at(t, 0) = pitch.pitch.f0[t];

  fs::create_directories(out);
  audio::write_feature_file(out / "mel.sftr", mel.frames);
  audio::write_feature_file(out / "vuv.sftr", audio::flags_to_column(pitch.vuv.flags));
  audio::write_feature_file(out / "f0.sftr", f0);
  audio::write_feature_file(out / "lowband.sftr", audio::low_band(mel));
  write_json(out / "features.json",
             {{"sample_rate", mel.sample_rate},
              {"frames", frames},
              {"n_mels", mel.frames.cols},
              {"hop", mel.hop},
              {"win", mel.win},
              {"fft", mel.fft},
              {"voiced_frames", pitch.vuv.voiced_count()},
              {"files", {"mel.sftr", "vuv.sftr", "f0.sftr", "lowband.sftr"}}});
  std::cout << "featurize: " << frames << " frames -> " << out.string() << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& corrupt) {
  const auto names = lab::grad_suite_names();
  if (!corrupt.empty() && std::find(names.begin(), names.end(), corrupt) == names.end())
    throw InputError("gradcheck: unknown check '" + corrupt + "'");
  std::vector<std::string> failed;
  for (const auto& r : lab::run_grad_suite(seed, corrupt)) {
    std::printf("%-26s max_rel_err %.3e  %s\n", r.name.c_str(), r.max_rel_error,
                r.passed ? "PASS" : "FAIL");
    if (!r.passed) failed.push_back(r.name);
  }
  if (failed.empty()) {
    std::printf("gradcheck: all %zu checks passed (tolerance %.0e)\n", names.size(),
                lab::kGradTolerance);
    return kOk;
  }
  std::string list;
  for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
  std::fprintf(stderr, "gradcheck: FAILED: %s\n", list.c_str());
  return kVerifyFailed;
}

lab::RunConfig load_config(const fs::path& path) {
  auto cfg = lab::parse_run_config(read_json(path));
  lab::apply_seed_override(cfg);
  return cfg;
}

int cmd_train(const fs::path& config_path, const std::string& out_flag) {
  auto cfg = load_config(config_path);
  if (!out_flag.empty()) cfg.out = out_flag;
  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_json(out / "config.json", lab::run_config_json(cfg));

  const auto data = lab::generate_dataset(cfg.synth);
  lab::save_dataset(data, out / "data");

  std::ofstream train_log(out / "train_log.ndjson");
  std::ofstream metrics_log(out / "metrics.ndjson");
  const auto mode = lab::mode_name(cfg.train.mode);
  lab::Trainer trainer(data, cfg.train);
  bool finite = true;
  std::string error;
  try {
    trainer.run(
        cfg.steps,
        [&](const lab::HistoryEntry& e) {
          metrics_log << e.to_json(mode).dump() << '\n' << std::flush;
          std::cerr << "step " << e.step << " recon_l1 " << e.metrics.recon_l1 << " orthogonality "
                    << e.metrics.orthogonality << '\n';
        },
        [&](const objectives::LossReport& r) { r.write_ndjson(train_log); });
  } catch (const objectives::TrainingAborted& e) {
    finite = false;
    error = e.what();
  }

  lab::save_model(trainer.model(), out / "checkpoint", {{"mode", mode}});
  const auto pairs = lab::transfer_pairs(data, cfg.seed);
  const auto transfer =
      lab::transfer_score(trainer.model(), data, cfg.synth, pairs, trainer.settings().encode);
  json report{{"config", lab::run_config_json(cfg)},
              {"steps_done", trainer.steps_done()},
              {"finite", finite},
              {"error", error},
              {"code_restarts", trainer.code_restarts()},
              {"final", trainer.history().empty() ? json() : trainer.history().back().to_json(mode)},
              {"transfer",
               {{"pairs", transfer.pairs},
                {"closer_to_reference", transfer.closer_to_reference},
                {"fraction", transfer.fraction()}}}};
  write_json(out / "run.json", report);
  if (!finite) {
    std::cerr << "train: " << error << '\n';
    return kVerifyFailed;
  }
  std::cout << "train: " << trainer.steps_done() << " steps -> " << out.string() << '\n';
  return kOk;
}

std::vector<const lab::SynthSample*> eval_split(const lab::Dataset& data) {
  std::vector<const lab::SynthSample*> out;
  for (auto i : data.eval) out.push_back(&data.samples[i]);
  if (out.empty()) throw InputError("eval: dataset has an empty eval split");
  return out;
}

int cmd_eval(const fs::path& model_dir, const fs::path& data_dir) {
  json meta;
  lab::Dataset data;
  try {
    meta = lab::model_meta(model_dir);
    data = lab::load_dataset(data_dir);
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(std::string("eval: ") + e.what());
  }
  const auto eval = eval_split(data);
  lab::Metrics m;
  if (meta.value("kind", "") == lab::kIdentityOracleKind) {
    std::vector<audio::FrameMatrix> recon;
    for (const auto* s : eval) recon.push_back(s->mel);
    m = lab::score_reconstructions(eval, recon);
  } else {
    const auto mode = lab::parse_mode(meta.value("mode", "full"));
    if (!mode) throw InputError("eval: checkpoint has an unknown mode");
    const auto model = lab::load_model(model_dir);
    m = lab::eval_metrics(model, eval, lab::settings_for(*mode).encode);
  }
  std::cout << m.to_json().dump() << '\n';
  return kOk;
}

int cmd_oracle(const fs::path& out) {
  lab::save_identity_oracle(out);
  std::cout << "oracle: identity-copy checkpoint -> " << out.string() << '\n';
  return kOk;
}

int cmd_ablate(std::uint64_t seed, std::size_t steps, const fs::path& out,
               const std::string& config_path) {
  auto cfg = config_path.empty() ? lab::parse_run_config(json::object()) : load_config(config_path);
  cfg.seed = seed;
  cfg.synth.seed = seed;
  cfg.train.seed = seed;
  const auto data = lab::generate_dataset(cfg.synth);
  const auto rows = lab::run_ablation(data, cfg.train, steps, [](const lab::AblationRow& r) {
    std::cerr << "ablate: " << lab::mode_name(r.mode) << " done, recon_l1 " << r.final.recon_l1
              << '\n';
  });
  fs::create_directories(out);
  write_json(out / "ablation.json", lab::ablation_json(rows, seed, steps));
  const auto table = lab::ablation_table(rows);
  std::ofstream(out / "ablation.txt") << table;
  std::cout << table;
  for (const auto& r : rows)
    if (!r.finite) {
      std::cerr << "ablate: mode " << lab::mode_name(r.mode) << " diverged: " << r.error << '\n';
      return kVerifyFailed;
    }
  return kOk;
}

int cmd_export(const fs::path& run_dir, const std::string& out_file) {
  auto report = read_json(run_dir / "run.json");
  json history = json::array();
  std::ifstream metrics(run_dir / "metrics.ndjson");
  for (std::string line; std::getline(metrics, line);)
    if (!line.empty()) history.push_back(json::parse(line));
  report["history"] = std::move(history);
  if (out_file.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    write_json(out_file, report);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spotlight: voiced-aware style extraction toolkit"};
  app.require_subcommand(1);

  std::string wav, out, config, model, data, corrupt, run_dir;
  std::uint64_t seed = 7;
  std::size_t steps = 500;

  auto* featurize = app.add_subcommand("featurize", "Extract mel, V/UV, f0 and low-band features");
  featurize->add_option("--wav", wav, "Mono PCM16 WAV file")->required();
  featurize->add_option("--out", out, "Output directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gradcheck->add_option("--seed", seed, "Random seed")->capture_default_str();
  gradcheck->add_option("--corrupt", corrupt, "Deliberately break the backward of one check");

  auto* train = app.add_subcommand("train", "Train the toy model");
  train->add_option("--config", config, "Run configuration JSON")->required();
  train->add_option("--out", out, "Output directory (overrides the config)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset cache");
  eval->add_option("--model", model, "Checkpoint directory")->required();
  eval->add_option("--data", data, "Dataset cache directory")->required();

  auto* oracle = app.add_subcommand("oracle", "Write the identity-copy oracle checkpoint");
  oracle->add_option("--out", out, "Checkpoint directory")->required();

  auto* ablate = app.add_subcommand("ablate", "Train every ablation mode and compare");
  ablate->add_option("--seed", seed, "Random seed")->capture_default_str();
  ablate->add_option("--steps", steps, "Steps per mode")->capture_default_str()->check(
      CLI::PositiveNumber);
  ablate->add_option("--out", out, "Output directory")->required();
  ablate->add_option("--config", config, "Run configuration supplying model and data settings");

  auto* exp = app.add_subcommand("export", "Bundle a training run into one JSON report");
  exp->add_option("--run", run_dir, "Training output directory")->required();
  exp->add_option("--out", out, "Report file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*featurize) return cmd_featurize(wav, out);
    if (*gradcheck) return cmd_gradcheck(seed, corrupt);
    if (*train) return cmd_train(config, out);
    if (*eval) return cmd_eval(model, data);
    if (*oracle) return cmd_oracle(out);
    if (*ablate) return cmd_ablate(seed, steps, out, config);
    if (*exp) return cmd_export(run_dir, out);
  } catch (const lab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kVerifyFailed;
  }
  return kUsage;
}

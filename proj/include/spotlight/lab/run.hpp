#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "spotlight/lab/train.hpp"

namespace spotlight::lab {

/// Invalid run configuration; `path()` is the offending key, e.g. "style.dim".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& message);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t steps = 500;
  std::string out = "run";
  SynthSpec synth;
  TrainOptions train;
};

/// Parses a run configuration. Missing keys keep their defaults; unknown
/// keys and ill-typed values raise ConfigError. A top-level "seed" also
/// seeds the dataset unless "synth.seed" is given.
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_json(const RunConfig& cfg);

/// Applies SPOTLIGHT_SEED from the environment, if set and numeric.
void apply_seed_override(RunConfig& cfg);

struct AblationRow {
  TrainMode mode = TrainMode::kFull;
  std::size_t steps = 0;
  bool finite = true;
  std::string error;  // diagnostic when training aborted
  double final_total = 0.0;
  Metrics initial;
  Metrics final;

  nlohmann::json to_json() const;
};

/// Summary of a finished (or aborted) trainer.
AblationRow summarize(const Trainer& trainer, bool finite, std::string error = {});

/// Trains one mode for `steps` steps and summarizes it. A non-finite loss
/// ends the run early with finite = false.
AblationRow run_mode(const Dataset& data, TrainOptions options, std::size_t steps);

/// Runs every mode in all_modes() order on the same data and seed.
std::vector<AblationRow> run_ablation(const Dataset& data, const TrainOptions& base,
                                      std::size_t steps,
                                      const std::function<void(const AblationRow&)>& on_row = {});

nlohmann::json ablation_json(const std::vector<AblationRow>& rows, std::uint64_t seed,
                             std::size_t steps);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace spotlight::lab

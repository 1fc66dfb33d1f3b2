#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spotlight/diff/adamw.hpp"
#include "spotlight/lab/model.hpp"

namespace spotlight::lab {

/// Ablation configurations: the full system, the voiced-aware extraction
/// ablations, the loss ablations, and the attention variants.
enum class TrainMode {
  kFull,
  kNoRt,
  kNoRtNoUf,
  kNoRtNoUfNoVe,
  kNoSp,
  kNoSpNoSd,
  kBinaryMask,
  kPlainAttention,
};

const std::vector<TrainMode>& all_modes();
std::string mode_name(TrainMode mode);
/// Accepts the names produced by mode_name ("full", "-RT", ...).
std::optional<TrainMode> parse_mode(const std::string& name);

struct ModeSettings {
  style::EncodeMode encode;
  objectives::LossWeights weights;
};

ModeSettings settings_for(TrainMode mode, const objectives::LossWeights& base = {});

struct Metrics {
  double vuv_f1 = 0.0;
  double rmse_f0_proxy = 0.0;
  double orthogonality = 0.0;
  std::vector<double> utilization;  // per RVQ layer
  double recon_l1 = 0.0;
  double quantization_error = 0.0;  // |final residual|^2 / |RVQ input|^2

  nlohmann::json to_json() const;
};

/// Scores reconstructed mels against the ground truth of `samples`:
/// V/UV F1 from the energy-ratio estimate and the f0 proxy RMSE on
/// ground-truth voiced frames. Other fields are left at zero.
Metrics score_reconstructions(const std::vector<const SynthSample*>& samples,
                              const std::vector<FrameMatrix>& reconstructions);

/// Mean over frame pairs of the squared cosine between content and style rows.
double orthogonality(const Tensor<float>& content, const Tensor<float>& style);

Metrics eval_metrics(const ToyModel& model, const std::vector<const SynthSample*>& eval,
                     const style::EncodeMode& mode = {});

/// Reconstructs `content`'s symbols in the style of `reference`.
FrameMatrix style_transfer(const ToyModel& model, const SynthSample& content,
                           const SynthSample& reference, const style::EncodeMode& mode = {});

/// Dead-code restart: a code not selected for `restart_after` consecutive
/// steps is re-seeded from a residual row the layer saw in the current batch.
struct CodeUsage {
  std::size_t restart_after = 20;
  std::vector<std::vector<std::int64_t>> last_used;  // layer x K, step index
  std::vector<std::vector<std::vector<float>>> candidates;  // layer x rows x D
  std::int64_t step = 0;
  std::size_t restarts = 0;

  /// Records selections and residual rows of one forward pass.
  void observe(const style::EncodeResult<float>& result, const vq::RvqStack<float>& rvq);
  /// Re-seeds dead codes and clears their optimiser moments, then advances
  /// the step counter.
  void restart_dead(ToyModel& model, diff::AdamWState& opt, std::mt19937_64& rng);
};

struct TrainOptions {
  TrainMode mode = TrainMode::kFull;
  std::uint64_t seed = 7;
  std::size_t batch_size = 8;
  diff::AdamWConfig optimizer{1e-3, 0.9, 0.98, 1e-8, 0.01};
  objectives::LossWeights weights;
  ToyModelConfig model;
  std::size_t eval_every = 50;
  bool restart_dead_codes = true;
  std::size_t restart_after = 20;
};

/// One optimisation step over `batch`: every loss is averaged over the batch
/// items before the weighted total is differentiated.
objectives::LossReport train_step(ToyModel& model, const std::vector<const SynthSample*>& batch,
                                  const objectives::LossWeights& weights,
                                  diff::AdamWState& opt, const style::EncodeMode& mode,
                                  CodeUsage* usage = nullptr);

struct HistoryEntry {
  std::int64_t step = 0;
  objectives::LossReport loss;  // last training step (zeros at step 0)
  Metrics metrics;

  nlohmann::json to_json(const std::string& mode) const;
};

/// Stateful training run; steps can be resumed in several calls.
class Trainer {
 public:
  using Observer = std::function<void(const HistoryEntry&)>;
  using StepObserver = std::function<void(const objectives::LossReport&)>;

  Trainer(const Dataset& data, TrainOptions options);

  /// Runs `steps` more steps. Metrics are evaluated on the eval split at
  /// step 0 and every `eval_every` steps, and after the last step.
  /// `on_step` sees every loss report.
  void run(std::size_t steps, const Observer& observer = {}, const StepObserver& on_step = {});
  objectives::LossReport step();
  Metrics evaluate() const;

  const ToyModel& model() const { return model_; }
  ToyModel& model() { return model_; }
  const std::vector<HistoryEntry>& history() const { return history_; }
  std::int64_t steps_done() const { return step_; }
  const TrainOptions& options() const { return options_; }
  const ModeSettings& settings() const { return settings_; }
  std::size_t code_restarts() const { return usage_.restarts; }

 private:
  void record(const objectives::LossReport& loss, const Observer& observer);

  const Dataset& data_;
  TrainOptions options_;
  ModeSettings settings_;
  ToyModel model_;
  diff::AdamWState opt_;
  std::mt19937_64 rng_;
  std::int64_t step_ = 0;
  std::vector<HistoryEntry> history_;
  CodeUsage usage_;
};

struct TrainResult {
  ToyModel model;
  std::vector<HistoryEntry> history;
};

/// Generates the dataset, trains `steps` steps, and returns the model with
/// its metric history.
TrainResult train_loop(const SynthSpec& spec, TrainMode mode, std::size_t steps,
                       std::uint64_t seed);

struct TransferPair {
  std::size_t content = 0;    // sample index supplying the symbols
  std::size_t reference = 0;  // sample index supplying the style
};

/// For each eval sample and each other style, one reference of that style
/// drawn uniformly from the eval split.
std::vector<TransferPair> transfer_pairs(const Dataset& data, std::uint64_t seed);

struct TransferScore {
  std::size_t pairs = 0;
  std::size_t closer_to_reference = 0;
  double fraction() const { return pairs ? static_cast<double>(closer_to_reference) / pairs : 0.0; }
};

/// Counts pairs whose transferred f0 proxy (on the content sample's voiced
/// frames) is closer in L2 to the reference style's base f0 than to the
/// content sample's own style base.
TransferScore transfer_score(const ToyModel& model, const Dataset& data, const SynthSpec& spec,
                             const std::vector<TransferPair>& pairs,
                             const style::EncodeMode& mode = {});

}  // namespace spotlight::lab

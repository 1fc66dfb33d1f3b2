#include "spotlight/lab/train.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "spotlight/diff/ops.hpp"

namespace spotlight::lab {

const std::vector<TrainMode>& all_modes() {
  static const std::vector<TrainMode> modes{
      TrainMode::kFull, TrainMode::kNoRt,     TrainMode::kNoRtNoUf,    TrainMode::kNoRtNoUfNoVe,
      TrainMode::kNoSp, TrainMode::kNoSpNoSd, TrainMode::kBinaryMask, TrainMode::kPlainAttention};
  return modes;
}

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kFull: return "full";
    case TrainMode::kNoRt: return "-RT";
    case TrainMode::kNoRtNoUf: return "-RT-UF";
    case TrainMode::kNoRtNoUfNoVe: return "-RT-UF-VE";
    case TrainMode::kNoSp: return "-SP";
    case TrainMode::kNoSpNoSd: return "-SP-SD";
    case TrainMode::kBinaryMask: return "BM";
    case TrainMode::kPlainAttention: return "plain";
  }
  return "?";
}

std::optional<TrainMode> parse_mode(const std::string& name) {
  for (auto m : all_modes())
    if (mode_name(m) == name) return m;
  return std::nullopt;
}

ModeSettings settings_for(TrainMode mode, const objectives::LossWeights& base) {
  ModeSettings s{{}, base};
  auto& e = s.encode;
  switch (mode) {
    case TrainMode::kFull: break;
    case TrainMode::kNoRtNoUfNoVe: e.voiced_extraction = false; [[fallthrough]];
    case TrainMode::kNoRtNoUf: e.unvoiced_filler = false; [[fallthrough]];
    case TrainMode::kNoRt: e.gradient = vq::GradientMode::kStraightThrough; break;
    case TrainMode::kNoSpNoSd: s.weights.sd = 0.0; [[fallthrough]];
    case TrainMode::kNoSp: s.weights.sp = 0.0; break;
    case TrainMode::kBinaryMask: e.attention = style::AttentionMode::kBinary; break;
    case TrainMode::kPlainAttention: e.attention = style::AttentionMode::kPlain; break;
  }
  return s;
}

nlohmann::json Metrics::to_json() const {
  return {{"vuv_f1", vuv_f1},           {"rmse_f0_proxy", rmse_f0_proxy},
          {"orthogonality", orthogonality}, {"utilization", utilization},
          {"recon_l1", recon_l1},       {"quantization_error", quantization_error}};
}

Metrics score_reconstructions(const std::vector<const SynthSample*>& samples,
                              const std::vector<FrameMatrix>& reconstructions) {
  if (samples.empty()) throw std::invalid_argument("score_reconstructions: empty eval set");
  if (samples.size() != reconstructions.size())
    throw std::invalid_argument("score_reconstructions: sample/reconstruction count mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, voiced = 0;
  double sq = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    const auto& rec = reconstructions[i];
    if (rec.rows != s.frames())
      throw std::invalid_argument("score_reconstructions: frame count mismatch");
    const auto est = energy_ratio_vuv(rec);
    const auto f0 = f0_proxy(rec);
    for (std::size_t t = 0; t < s.frames(); ++t) {
      const bool truth = s.vuv.flags[t], guess = est.flags[t];
      tp += truth && guess;
      fp += !truth && guess;
      fn += truth && !guess;
      if (truth) {
        const double d = f0[t] - s.f0[t];
        sq += d * d;
        ++voiced;
      }
    }
  }
  Metrics m;
  m.vuv_f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  m.rmse_f0_proxy = voiced ? std::sqrt(sq / voiced) : 0.0;
  return m;
}

double orthogonality(const Tensor<float>& content, const Tensor<float>& style) {
  const std::size_t t = content.rows(), d = content.cols();
  auto normalized = [d](const Tensor<float>& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::size_t r = 0; r * d < out.size(); ++r) {
      double n = 0.0;
      for (std::size_t c = 0; c < d; ++c) n += out[r * d + c] * out[r * d + c];
      n = std::sqrt(n) + 1e-12;
      for (std::size_t c = 0; c < d; ++c) out[r * d + c] /= n;
    }
    return out;
  };
  const auto a = normalized(content), b = normalized(style);
  const std::size_t ts = style.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < ts; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += a[i * d + c] * b[j * d + c];
      acc += dot * dot;
    }
  return acc / static_cast<double>(t * ts);
}

Metrics eval_metrics(const ToyModel& model, const std::vector<const SynthSample*>& eval,
                     const style::EncodeMode& mode) {
  if (eval.empty()) throw std::invalid_argument("eval_metrics: empty eval set");
  std::vector<FrameMatrix> recon;
  double l1 = 0.0, ortho = 0.0, residual = 0.0, input = 0.0;
  const std::size_t depth = model.encoder.rvq.depth();
  std::vector<std::set<std::size_t>> used(depth);
  for (const auto* s : eval) {
    const auto mel = to_tensor(s->mel);
    auto out = forward(model, s->content_ids, mel, s->vuv, mode);
    l1 += diff::mean(diff::abs(diff::sub(out.mel, mel))).item();
    ortho += orthogonality(out.content, out.style.style.frames);
    const auto& q = out.style.quantizer;
    input += q.residual_norms.front() * q.residual_norms.front();
    residual += q.residual_norms.back() * q.residual_norms.back();
    for (const auto& row : q.indices)
      for (std::size_t l = 0; l < depth; ++l) used[l].insert(row[l]);
    recon.push_back(to_frame_matrix(out.mel));
  }
  auto m = score_reconstructions(eval, recon);
  const double n = static_cast<double>(eval.size());
  m.recon_l1 = l1 / n;
  m.orthogonality = ortho / n;
  m.quantization_error = input > 0.0 ? residual / input : 0.0;
  for (const auto& u : used)
    m.utilization.push_back(static_cast<double>(u.size()) /
                            static_cast<double>(model.encoder.rvq.codebook_size()));
  return m;
}

FrameMatrix style_transfer(const ToyModel& model, const SynthSample& content,
                           const SynthSample& reference, const style::EncodeMode& mode) {
  auto out = forward(model, content.content_ids, to_tensor(reference.mel), reference.vuv, mode);
  return to_frame_matrix(out.mel);
}

objectives::LossReport train_step(ToyModel& model, const std::vector<const SynthSample*>& batch,
                                  const objectives::LossWeights& weights,
                                  diff::AdamWState& opt, const style::EncodeMode& mode,
                                  CodeUsage* usage) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  auto params = model.parameters();
  for (auto& p : params) p.zero_grad();
  Tensor<float> recon, rvq, sd, sp;
  auto accumulate = [](Tensor<float>& acc, const Tensor<float>& term) {
    acc = acc.defined() ? diff::add(acc, term) : term;
  };
  for (const auto* s : batch) {
    const auto mel = to_tensor(s->mel);
    auto out = forward(model, s->content_ids, mel, s->vuv, mode);
    if (usage) usage->observe(out.style, model.encoder.rvq);
    accumulate(recon, diff::mean(diff::abs(diff::sub(out.mel, mel))));
    accumulate(rvq, vq::rvq_loss(out.style.quantizer));
    accumulate(sd, objectives::sd_loss(out.content, out.style.style.frames));
    accumulate(sp, objectives::sp_loss(out.style.style.frames, to_tensor(audio::low_band(s->mel)),
                                       model.head_style, model.head_prosody));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto total = objectives::total_loss(diff::scale(recon, inv), diff::scale(rvq, inv),
                                      diff::scale(sd, inv), diff::scale(sp, inv), weights);
  diff::backward(total.total);
  diff::adamw_step(params, opt);
  for (auto& p : params) p.zero_grad();
  return total.report;
}

void CodeUsage::observe(const style::EncodeResult<float>& result, const vq::RvqStack<float>& rvq) {
  const std::size_t depth = rvq.depth(), k = rvq.codebook_size(), d = rvq.dim();
  if (last_used.size() != depth) {
    last_used.assign(depth, std::vector<std::int64_t>(k, step));
    candidates.assign(depth, {});
  }
  const auto& input = result.quantizer_input;
  const auto& indices = result.quantizer.indices;
  for (std::size_t t = 0; t < indices.size(); ++t) {
    std::vector<float> r(input.data().begin() + t * d, input.data().begin() + (t + 1) * d);
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t idx = indices[t][l];
      last_used[l][idx] = step;
      candidates[l].push_back(r);
      const auto code = rvq.layers[l].codes.data().subspan(idx * d, d);
      for (std::size_t c = 0; c < d; ++c) r[c] -= code[c];
    }
  }
}

void CodeUsage::restart_dead(ToyModel& model, diff::AdamWState& opt, std::mt19937_64& rng) {
  auto params = model.parameters();
  for (std::size_t l = 0; l < last_used.size(); ++l) {
    auto& codes = model.encoder.rvq.layers[l].codes;
    const std::size_t d = codes.cols();
    std::size_t slot = 0;
    while (slot < params.size() && params[slot].node() != codes.node()) ++slot;
    if (candidates[l].empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, candidates[l].size() - 1);
    for (std::size_t k = 0; k < last_used[l].size(); ++k) {
      if (step - last_used[l][k] < static_cast<std::int64_t>(restart_after)) continue;
      const auto& row = candidates[l][pick(rng)];
      std::copy(row.begin(), row.end(), codes.mutable_data().begin() + k * d);
      if (slot < params.size()) {
        std::fill_n(opt.m[slot].begin() + k * d, d, 0.0);
        std::fill_n(opt.v[slot].begin() + k * d, d, 0.0);
      }
      last_used[l][k] = step;
      ++restarts;
    }
    candidates[l].clear();
  }
  ++step;
}

nlohmann::json HistoryEntry::to_json(const std::string& mode) const {
  return {{"mode", mode}, {"step", step}, {"loss", loss.to_json()}, {"metrics", metrics.to_json()}};
}

Trainer::Trainer(const Dataset& data, TrainOptions options)
    : data_(data),
      options_(std::move(options)),
      settings_(settings_for(options_.mode, options_.weights)),
      model_(ToyModel::create(options_.model, options_.seed)),
      opt_(diff::make_adamw(model_.parameters(), options_.optimizer)),
      rng_(options_.seed) {
  usage_.restart_after = options_.restart_after;
  if (data_.train.empty() || data_.eval.empty())
    throw std::invalid_argument("trainer: dataset needs non-empty train and eval splits");
  if (options_.batch_size == 0) throw std::invalid_argument("trainer: batch_size must be positive");
}

objectives::LossReport Trainer::step() {
  std::uniform_int_distribution<std::size_t> pick(0, data_.train.size() - 1);
  std::vector<const SynthSample*> batch;
  for (std::size_t i = 0; i < options_.batch_size; ++i)
    batch.push_back(&data_.samples[data_.train[pick(rng_)]]);
  CodeUsage* usage = options_.restart_dead_codes ? &usage_ : nullptr;
  auto report = train_step(model_, batch, settings_.weights, opt_, settings_.encode, usage);
  if (usage) usage_.restart_dead(model_, opt_, rng_);
  report.step = ++step_;
  return report;
}

Metrics Trainer::evaluate() const {
  std::vector<const SynthSample*> eval;
  for (auto i : data_.eval) eval.push_back(&data_.samples[i]);
  return eval_metrics(model_, eval, settings_.encode);
}

void Trainer::record(const objectives::LossReport& loss, const Observer& observer) {
  HistoryEntry e{step_, loss, evaluate()};
  history_.push_back(e);
  if (observer) observer(history_.back());
}

void Trainer::run(std::size_t steps, const Observer& observer, const StepObserver& on_step) {
  if (history_.empty()) record({}, observer);
  objectives::LossReport last;
  for (std::size_t i = 0; i < steps; ++i) {
    last = step();
    if (on_step) on_step(last);
    const bool due = options_.eval_every && step_ % static_cast<std::int64_t>(options_.eval_every) == 0;
    if (due || i + 1 == steps) record(last, observer);
  }
}

TrainResult train_loop(const SynthSpec& spec, TrainMode mode, std::size_t steps,
                       std::uint64_t seed) {
  if (steps == 0) throw std::invalid_argument("train_loop: steps must be at least 1");
  const auto data = generate_dataset(spec);
  TrainOptions opt;
  opt.mode = mode;
  opt.seed = seed;
  Trainer trainer(data, opt);
  trainer.run(steps);
  return {trainer.model(), trainer.history()};
}

std::vector<TransferPair> transfer_pairs(const Dataset& data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TransferPair> pairs;
  for (auto a : data.eval) {
    std::set<std::size_t> styles;
    for (auto b : data.eval) styles.insert(data.samples[b].style_id);
    for (auto style : styles) {
      if (style == data.samples[a].style_id) continue;
      std::vector<std::size_t> candidates;
      for (auto b : data.eval)
        if (data.samples[b].style_id == style) candidates.push_back(b);
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      pairs.push_back({a, candidates[pick(rng)]});
    }
  }
  return pairs;
}

TransferScore transfer_score(const ToyModel& model, const Dataset& data, const SynthSpec& spec,
                             const std::vector<TransferPair>& pairs,
                             const style::EncodeMode& mode) {
  TransferScore score;
  for (const auto& p : pairs) {
    const auto& a = data.samples[p.content];
    const auto& b = data.samples[p.reference];
    const auto f0 = f0_proxy(style_transfer(model, a, b, mode));
    const double base_a = spec.style(a.style_id).f0_base;
    const double base_b = spec.style(b.style_id).f0_base;
    double da = 0.0, db = 0.0;
    for (std::size_t t = 0; t < a.frames(); ++t) {
      if (!a.vuv.flags[t]) continue;
      da += (f0[t] - base_a) * (f0[t] - base_a);
      db += (f0[t] - base_b) * (f0[t] - base_b);
    }
    ++score.pairs;
    if (db < da) ++score.closer_to_reference;
  }
  return score;
}

}  // namespace spotlight::lab

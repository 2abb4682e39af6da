#include "falsecl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <string>

namespace falsecl {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696e000000ULL;

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw BadConfig("epochs must be >= 0");
  if (batch_size < 2) throw BadConfig("batch_size must be >= 2");
  if (!(lr >= 0.0)) throw BadConfig("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw BadConfig("momentum must be in [0, 1)");
  if (warmup_epochs < 0) throw BadConfig("warmup_epochs must be >= 0");
  if (encoder_dims.size() < 2) throw BadConfig("encoder needs at least input and output dims");
  loss.validate();
  augment.validate();
}

BatchStep compute_batch_step(const EncoderParams& params, const ViewBatch& batch,
                             const LossConfig& loss_cfg, bool detect) {
  ForwardResult fwd = forward(params, batch.views);
  const SimilarityContext ctx = build_similarity_context(fwd.embeddings, batch.positive_of);
  BatchStep step;
  step.flags = detect ? detect_possible_fns(ctx, loss_cfg.threshold, loss_cfg.k_max)
                      : FnsFlags::empty(ctx.n_anchors());
  step.loss = fncc_loss(ctx, step.flags, loss_cfg);
  step.grads = backward(params, fwd.cache, step.loss.grad_embeddings);
  double pos = 0.0;
  for (std::size_t i = 0; i < ctx.n_anchors(); ++i) {
    pos += ctx.sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ctx.positive_of[i]));
  }
  step.mean_positive_similarity = pos / static_cast<double>(ctx.n_anchors());
  return step;
}

TrainState make_train_state(const TrainConfig& cfg, int d_in) {
  cfg.validate();
  if (cfg.encoder_dims.front() != d_in) {
    throw ShapeMismatch("dataset dimension " + std::to_string(d_in) +
                        " does not match encoder input " + std::to_string(cfg.encoder_dims.front()));
  }
  EncoderParams params = init_params(cfg.encoder_dims, cfg.seed);
  SgdState opt = make_sgd_state(params);
  return TrainState{cfg, std::move(params), std::move(opt), Rng(splitmix64(cfg.seed ^ kTrainStream)),
                    0};
}

EpochMetrics train_epoch(TrainState& state, const Matrix& samples) {
  const auto start = std::chrono::steady_clock::now();
  const TrainConfig& cfg = state.cfg;
  if (samples.cols() != state.params.d_in()) throw ShapeMismatch("train_epoch: sample width");
  const bool detect = cfg.fnsd_enabled && state.epoch >= cfg.warmup_epochs;

  const auto batches =
      make_epoch_batches(static_cast<std::size_t>(samples.rows()),
                         static_cast<std::size_t>(cfg.batch_size), state.rng);
  EpochMetrics m;
  m.epoch = state.epoch;
  std::size_t anchors = 0;
  std::size_t flagged = 0;
  for (const auto& idx : batches) {
    const ViewBatch views = augment_two_views(gather_rows(samples, idx), cfg.augment, state.rng);
    const BatchStep step = compute_batch_step(state.params, views, cfg.loss, detect);
    if (cfg.lr > 0.0) sgd_step(state.params, step.grads, cfg.lr, cfg.momentum, state.optimizer);
    m.mean_loss += step.loss.loss;
    m.mean_positive_similarity += step.mean_positive_similarity;
    flagged += step.flags.total_flagged();
    anchors += views.n_views();
  }
  if (!batches.empty()) {
    const auto nb = static_cast<double>(batches.size());
    m.mean_loss /= nb;
    m.mean_positive_similarity /= nb;
    m.mean_flagged_per_anchor = static_cast<double>(flagged) / static_cast<double>(anchors);
  }
  ++state.epoch;
  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

PretrainResult pretrain(const TrainConfig& cfg, const Matrix& samples) {
  TrainState state = make_train_state(cfg, static_cast<int>(samples.cols()));
  PretrainResult out;
  for (int e = 0; e < cfg.epochs; ++e) out.metrics.push_back(train_epoch(state, samples));
  out.params = std::move(state.params);
  return out;
}

PretrainResult pretrain(const TrainConfig& cfg, const LabeledDataset& ds) {
  return pretrain(cfg, ds.samples);
}

double pipeline_loss(const EncoderParams& params, const ViewBatch& batch, const FnsFlags& flags,
                     const LossConfig& cfg) {
  const SimilarityContext ctx = build_similarity_context(embed(params, batch.views), batch.positive_of);
  return fncc_loss(ctx, flags, cfg).loss;
}

double pipeline_grad_check(const EncoderParams& params, const ViewBatch& batch,
                           const FnsFlags& flags, const LossConfig& cfg, double epsilon) {
  ForwardResult fwd = forward(params, batch.views);
  const SimilarityContext ctx = build_similarity_context(fwd.embeddings, batch.positive_of);
  const LossResult loss = fncc_loss(ctx, flags, cfg);
  const std::vector<double> analytic = flatten(backward(params, fwd.cache, loss.grad_embeddings));

  EncoderParams probe = params;
  std::vector<double> values = flatten(params);
  double worst = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double orig = values[k];
    values[k] = orig + epsilon;
    unflatten(probe, values);
    const double up = pipeline_loss(probe, batch, flags, cfg);
    values[k] = orig - epsilon;
    unflatten(probe, values);
    const double down = pipeline_loss(probe, batch, flags, cfg);
    values[k] = orig;
    worst = std::max(worst, relative_error(analytic[k], (up - down) / (2.0 * epsilon)));
  }
  return worst;
}

}  // namespace falsecl

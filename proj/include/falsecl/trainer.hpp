#pragma once

#include <cstdint>
#include <vector>

#include "falsecl/data.hpp"
#include "falsecl/encoder.hpp"
#include "falsecl/fncc.hpp"

namespace falsecl {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 0.5;
  double momentum = 0.9;
  LossConfig loss;
  std::vector<int> encoder_dims{32, 64, 16};
  AugmentConfig augment = AugmentConfig::toy_defaults();
  std::uint64_t seed = 0;
  // Epochs at the start that train with plain InfoNCE before detection starts.
  int warmup_epochs = 0;
  // When false the detection step never runs (pure InfoNCE baseline).
  bool fnsd_enabled = true;

  /// Throws BadConfig. lr = 0 is accepted and means "evaluate, never update".
  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_flagged_per_anchor = 0.0;
  double mean_positive_similarity = 0.0;
  double wall_seconds = 0.0;
};

/// Everything one optimizer step needs from a batch of views.
struct BatchStep {
  LossResult loss;
  FnsFlags flags;
  ParamGrads grads;
  double mean_positive_similarity = 0.0;
};

BatchStep compute_batch_step(const EncoderParams& params, const ViewBatch& batch,
                             const LossConfig& loss_cfg, bool detect);

struct TrainState {
  TrainConfig cfg;
  EncoderParams params;
  SgdState optimizer;
  Rng rng;
  int epoch = 0;
};

TrainState make_train_state(const TrainConfig& cfg, int d_in);

/// One shuffled pass over `samples`. Labels are never an input.
EpochMetrics train_epoch(TrainState& state, const Matrix& samples);

struct PretrainResult {
  EncoderParams params;
  std::vector<EpochMetrics> metrics;
};

PretrainResult pretrain(const TrainConfig& cfg, const Matrix& samples);

/// Reads only ds.samples.
PretrainResult pretrain(const TrainConfig& cfg, const LabeledDataset& ds);

/// Loss of the full pipeline (encoder -> normalize -> loss) with frozen flags.
double pipeline_loss(const EncoderParams& params, const ViewBatch& batch, const FnsFlags& flags,
                     const LossConfig& cfg);

/// Max relative error of analytic parameter gradients against central
/// differences of pipeline_loss, flags frozen.
double pipeline_grad_check(const EncoderParams& params, const ViewBatch& batch,
                           const FnsFlags& flags, const LossConfig& cfg, double epsilon);

}  // namespace falsecl

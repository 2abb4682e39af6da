#pragma once

// Label-aware evaluation. This is the only module that reads dataset labels.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "falsecl/trainer.hpp"

namespace falsecl {

/// Majority vote among the k training rows with the highest cosine similarity
/// (ties in similarity go to the lower training index; ties in the vote go to
/// the smaller class index). Returns the fraction of test rows classified
/// correctly. Throws BadConfig.
double knn_probe(const Matrix& train_embeddings, const std::vector<std::int32_t>& train_labels,
                 const Matrix& test_embeddings, const std::vector<std::int32_t>& test_labels,
                 int k);

/// Decomposition of flagged views into same-class (n_f) and other-class (n_h)
/// negatives of their anchor; n_f + n_h == n_flagged always.
struct FnsDetectionReport {
  std::size_t n_anchors = 0;
  std::size_t n_flagged = 0;
  std::size_t n_f = 0;
  std::size_t n_h = 0;
  // Sum over flagged views of their anchor's same-class share among negatives.
  double flagged_base_rate_sum = 0.0;
  // Sum over all anchors of the same share.
  double anchor_base_rate_sum = 0.0;

  /// n_f / n_flagged; absent when nothing was flagged.
  std::optional<double> precision() const;
  /// Expected precision of a flagger choosing uniformly among each anchor's
  /// negatives, weighted like `precision()`. Falls back to the mean over all
  /// anchors when nothing was flagged.
  double base_rate() const;

  FnsDetectionReport& operator+=(const FnsDetectionReport& other);
};

/// `source_labels[s]` is the class of batch source s; `source_of` maps views to sources.
FnsDetectionReport fns_detection_metrics(const FnsFlags& flags, const SimilarityContext& ctx,
                                         const std::vector<std::int32_t>& source_labels,
                                         const std::vector<std::size_t>& source_of);

/// Runs detection with a frozen encoder over `n_batches` fresh augmented batches.
FnsDetectionReport evaluate_detection(const EncoderParams& params, const LabeledDataset& ds,
                                      const TrainConfig& cfg, std::size_t n_batches,
                                      std::uint64_t seed);

/// Embeds `ds` with the frozen encoder, splits it 80/20 with a seeded shuffle,
/// and runs knn_probe.
double probe_accuracy(const EncoderParams& params, const LabeledDataset& ds, int k,
                      std::uint64_t split_seed);

struct SweepOptions {
  int knn_k = 5;
  std::size_t detection_batches = 24;
  int jobs = 1;
};

struct SweepRow {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double probe_accuracy = 0.0;
  std::optional<double> detection_precision;
  double detection_base_rate = 0.0;
  std::size_t n_flagged = 0;
  std::size_t n_f = 0;
  std::size_t n_h = 0;
  double final_loss = 0.0;
  double final_positive_similarity = 0.0;
};

struct AlphaAggregate {
  double alpha = 0.0;
  std::size_t runs = 0;
  double probe_mean = 0.0;
  double probe_std = 0.0;
  // Over runs where precision is defined.
  std::size_t precision_runs = 0;
  double precision_mean = 0.0;
  double precision_std = 0.0;
  double base_rate_mean = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // alpha-major, then seed, in request order
  std::vector<AlphaAggregate> aggregates;
};

/// Full pretrain + probe + detection for every (alpha, seed). Cells may run
/// on `opts.jobs` threads; output is independent of the thread count.
SweepReport sweep_alpha(const TrainConfig& cfg_template, const std::vector<double>& alphas,
                        const std::vector<std::uint64_t>& seeds, const LabeledDataset& ds,
                        const LabeledDataset& probe_ds, const SweepOptions& opts);

/// Plain-text alpha x (probe accuracy, detection precision) table.
std::string format_sweep_summary(const SweepReport& report);

}  // namespace falsecl

#include "falsecl/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <thread>

namespace falsecl {

namespace {

constexpr std::uint64_t kDetectStream = 0x6465746563740000ULL;

void mean_std(const std::vector<double>& xs, double& mean, double& stddev) {
  mean = 0.0;
  stddev = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

double knn_probe(const Matrix& train_embeddings, const std::vector<std::int32_t>& train_labels,
                 const Matrix& test_embeddings, const std::vector<std::int32_t>& test_labels,
                 int k) {
  if (k < 1) throw BadConfig("knn_probe: k must be >= 1");
  if (train_embeddings.rows() == 0 || test_embeddings.rows() == 0) {
    throw BadConfig("knn_probe: empty train or test set");
  }
  if (static_cast<std::size_t>(train_embeddings.rows()) != train_labels.size() ||
      static_cast<std::size_t>(test_embeddings.rows()) != test_labels.size()) {
    throw BadConfig("knn_probe: label count does not match embeddings");
  }
  if (train_embeddings.cols() != test_embeddings.cols()) {
    throw ShapeMismatch("knn_probe: train/test embedding widths differ");
  }
  const Matrix train = numerics::l2_normalize_rows(train_embeddings);
  const Matrix test = numerics::l2_normalize_rows(test_embeddings);
  const Matrix sims = numerics::matmul(test, train.transpose());
  const auto n_train = static_cast<std::size_t>(train.rows());
  const std::size_t take = std::min(static_cast<std::size_t>(k), n_train);

  std::size_t correct = 0;
  std::vector<std::size_t> order(n_train);
  for (Eigen::Index t = 0; t < test.rows(); ++t) {
    for (std::size_t j = 0; j < n_train; ++j) order[j] = j;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = sims(t, static_cast<Eigen::Index>(a));
                        const double sb = sims(t, static_cast<Eigen::Index>(b));
                        return sa != sb ? sa > sb : a < b;
                      });
    std::map<std::int32_t, int> votes;
    for (std::size_t r = 0; r < take; ++r) ++votes[train_labels[order[r]]];
    std::int32_t best = votes.begin()->first;
    int best_votes = votes.begin()->second;
    for (const auto& [label, count] : votes) {
      if (count > best_votes) {
        best = label;
        best_votes = count;
      }
    }
    if (best == test_labels[static_cast<std::size_t>(t)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.rows());
}

std::optional<double> FnsDetectionReport::precision() const {
  if (n_flagged == 0) return std::nullopt;
  return static_cast<double>(n_f) / static_cast<double>(n_flagged);
}

double FnsDetectionReport::base_rate() const {
  if (n_flagged > 0) return flagged_base_rate_sum / static_cast<double>(n_flagged);
  if (n_anchors > 0) return anchor_base_rate_sum / static_cast<double>(n_anchors);
  return 0.0;
}

FnsDetectionReport& FnsDetectionReport::operator+=(const FnsDetectionReport& other) {
  n_anchors += other.n_anchors;
  n_flagged += other.n_flagged;
  n_f += other.n_f;
  n_h += other.n_h;
  flagged_base_rate_sum += other.flagged_base_rate_sum;
  anchor_base_rate_sum += other.anchor_base_rate_sum;
  return *this;
}

FnsDetectionReport fns_detection_metrics(const FnsFlags& flags, const SimilarityContext& ctx,
                                         const std::vector<std::int32_t>& source_labels,
                                         const std::vector<std::size_t>& source_of) {
  const std::size_t n = ctx.n_anchors();
  if (flags.flagged.size() != n || source_of.size() != n) {
    throw ShapeMismatch("fns_detection_metrics: flags/source map do not match the batch");
  }
  auto label_of_view = [&](std::size_t v) {
    const std::size_t s = source_of[v];
    if (s >= source_labels.size()) throw BadConfig("fns_detection_metrics: missing source label");
    return source_labels[s];
  };

  FnsDetectionReport r;
  r.n_anchors = n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t label = label_of_view(i);
    std::size_t negatives = 0;
    std::size_t same = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (source_of[j] == source_of[i]) continue;
      ++negatives;
      if (label_of_view(j) == label) ++same;
    }
    const double share =
        negatives > 0 ? static_cast<double>(same) / static_cast<double>(negatives) : 0.0;
    r.anchor_base_rate_sum += share;
    for (std::size_t j : flags.flagged[i]) {
      ++r.n_flagged;
      if (label_of_view(j) == label) {
        ++r.n_f;
      } else {
        ++r.n_h;
      }
      r.flagged_base_rate_sum += share;
    }
  }
  return r;
}

FnsDetectionReport evaluate_detection(const EncoderParams& params, const LabeledDataset& ds,
                                      const TrainConfig& cfg, std::size_t n_batches,
                                      std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ kDetectStream));
  FnsDetectionReport total;
  std::size_t done = 0;
  while (done < n_batches) {
    const auto batches = make_epoch_batches(static_cast<std::size_t>(ds.size()),
                                            static_cast<std::size_t>(cfg.batch_size), rng);
    if (batches.empty()) throw BadConfig("evaluate_detection: dataset too small for one batch");
    for (const auto& idx : batches) {
      if (done == n_batches) break;
      const ViewBatch views = augment_two_views(gather_rows(ds.samples, idx), cfg.augment, rng);
      const SimilarityContext ctx =
          build_similarity_context(embed(params, views.views), views.positive_of);
      const FnsFlags flags = detect_possible_fns(ctx, cfg.loss.threshold, cfg.loss.k_max);
      std::vector<std::int32_t> labels;
      labels.reserve(idx.size());
      for (std::size_t s : idx) labels.push_back(ds.labels[s]);
      total += fns_detection_metrics(flags, ctx, labels, views.source_of);
      ++done;
    }
  }
  return total;
}

double probe_accuracy(const EncoderParams& params, const LabeledDataset& ds, int k,
                      std::uint64_t split_seed) {
  if (ds.size() < 2) throw BadConfig("probe_accuracy: need at least 2 samples");
  const Matrix emb = embed(params, ds.samples);
  std::vector<std::size_t> order(static_cast<std::size_t>(ds.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(split_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train =
      std::clamp<std::size_t>((order.size() * 4) / 5, 1, order.size() - 1);
  const std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::vector<std::int32_t> train_labels;
  std::vector<std::int32_t> test_labels;
  for (std::size_t i : train_idx) train_labels.push_back(ds.labels[i]);
  for (std::size_t i : test_idx) test_labels.push_back(ds.labels[i]);
  return knn_probe(gather_rows(emb, train_idx), train_labels, gather_rows(emb, test_idx),
                   test_labels, k);
}

SweepReport sweep_alpha(const TrainConfig& cfg_template, const std::vector<double>& alphas,
                        const std::vector<std::uint64_t>& seeds, const LabeledDataset& ds,
                        const LabeledDataset& probe_ds, const SweepOptions& opts) {
  if (alphas.empty() || seeds.empty()) throw BadConfig("sweep_alpha: empty alpha or seed grid");
  if (opts.jobs < 1) throw BadConfig("sweep_alpha: jobs must be >= 1");
  for (double a : alphas) {
    LossConfig probe_cfg = cfg_template.loss;
    probe_cfg.alpha = a;
    probe_cfg.validate();
  }
  if (probe_ds.dim() != ds.dim()) throw ShapeMismatch("sweep_alpha: probe dataset width differs");

  SweepReport report;
  report.rows.resize(alphas.size() * seeds.size());

  auto run_cell = [&](std::size_t cell) {
    SweepRow& row = report.rows[cell];
    row.alpha = alphas[cell / seeds.size()];
    row.seed = seeds[cell % seeds.size()];
    TrainConfig cfg = cfg_template;
    cfg.loss.alpha = row.alpha;
    cfg.seed = row.seed;
    const PretrainResult trained = pretrain(cfg, ds.samples);
    row.probe_accuracy = probe_accuracy(trained.params, probe_ds, opts.knn_k, row.seed);
    const FnsDetectionReport det =
        evaluate_detection(trained.params, ds, cfg, opts.detection_batches, row.seed);
    row.detection_precision = det.precision();
    row.detection_base_rate = det.base_rate();
    row.n_flagged = det.n_flagged;
    row.n_f = det.n_f;
    row.n_h = det.n_h;
    if (!trained.metrics.empty()) {
      row.final_loss = trained.metrics.back().mean_loss;
      row.final_positive_similarity = trained.metrics.back().mean_positive_similarity;
    }
  };

  const std::size_t n_cells = report.rows.size();
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(opts.jobs), n_cells);
  if (n_workers <= 1) {
    for (std::size_t c = 0; c < n_cells; ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n_cells);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (std::size_t c = next++; c < n_cells; c = next++) {
          try {
            run_cell(c);
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (std::size_t a = 0; a < alphas.size(); ++a) {
    AlphaAggregate agg;
    agg.alpha = alphas[a];
    std::vector<double> probe;
    std::vector<double> precision;
    double base = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const SweepRow& row = report.rows[a * seeds.size() + s];
      probe.push_back(row.probe_accuracy);
      if (row.detection_precision) precision.push_back(*row.detection_precision);
      base += row.detection_base_rate;
    }
    agg.runs = probe.size();
    mean_std(probe, agg.probe_mean, agg.probe_std);
    agg.precision_runs = precision.size();
    mean_std(precision, agg.precision_mean, agg.precision_std);
    agg.base_rate_mean = base / static_cast<double>(seeds.size());
    report.aggregates.push_back(agg);
  }
  return report;
}

std::string format_sweep_summary(const SweepReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-7s %4s  %-17s  %-17s  %-9s\n", "alpha", "runs",
                "probe acc", "FNS precision", "base rate");
  out += line;
  for (const auto& a : report.aggregates) {
    char precision[64];
    if (a.precision_runs > 0) {
      std::snprintf(precision, sizeof precision, "%.4f +- %.4f", a.precision_mean, a.precision_std);
    } else {
      std::snprintf(precision, sizeof precision, "n/a");
    }
    std::snprintf(line, sizeof line, "%-7.3g %4zu  %.4f +- %.4f  %-17s  %.4f\n", a.alpha, a.runs,
                  a.probe_mean, a.probe_std, precision, a.base_rate_mean);
    out += line;
  }
  return out;
}

}  // namespace falsecl

#pragma once

// Confidence-calibrated contrastive loss. With u(x) = exp(sim(anchor, x) / tau)
// and F the flagged negatives of an anchor:
//
//   S_EP = alpha * sum_F u,   S_WN = (1 - alpha) * sum_F u
//   L    = -log((u(p) + S_EP) / (u(p) + S_EP + sum_{negatives not in F} u + S_WN))
//
// alpha = 0 or an empty F gives plain InfoNCE; alpha = 1 moves every flagged
// negative into the positive term.

#include <cstddef>
#include <vector>

#include "falsecl/fnsd.hpp"

namespace falsecl {

struct LossConfig {
  double alpha = 1.0;      // confidence weight in [0, 1]
  double tau = 1.0;        // temperature, sim / tau inside the exponentials
  double threshold = 0.9;  // benchmark gate on raw positive cosine
  std::size_t k_max = 1;   // possible false negatives per benchmark anchor

  void validate() const;
};

struct LossResult {
  double loss = 0.0;  // mean over all anchors
  std::vector<double> per_anchor;
  // d loss / d un-normalized embeddings; empty for a context built from a bare
  // similarity matrix.
  Matrix grad_embeddings;
};

/// Raw (unshifted) exponential masses for one anchor.
struct FnccTerms {
  double s_pos = 0.0;
  double s_ep = 0.0;
  double s_wn = 0.0;
  double s_rest = 0.0;

  double numerator() const { return s_pos + s_ep; }
  double denominator() const { return s_pos + s_ep + s_rest + s_wn; }
};

FnccTerms fncc_terms(const SimilarityContext& ctx, const FnsFlags& flags, std::size_t anchor,
                     const LossConfig& cfg);

/// Flags are constants here: no gradient flows through the selection.
LossResult fncc_loss(const SimilarityContext& ctx, const FnsFlags& flags, const LossConfig& cfg);

/// Baseline InfoNCE, identical to fncc_loss with no flags.
LossResult info_nce_loss(const SimilarityContext& ctx, const LossConfig& cfg);

/// Floor on the denominator of the relative error, so entries whose true
/// gradient is ~0 are judged on absolute error instead.
inline constexpr double kGradCheckFloor = 1e-6;

double relative_error(double analytic, double numeric, double floor = kGradCheckFloor);

/// Max relative error between grad_embeddings and central differences of
/// embeddings -> normalize -> loss, with `flags` frozen.
double fncc_grad_check(const Matrix& embeddings, const std::vector<std::size_t>& positive_of,
                       const FnsFlags& flags, const LossConfig& cfg, double epsilon);

}  // namespace falsecl

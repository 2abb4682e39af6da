#pragma once

// Coarse detection of possible false negatives inside a batch of paired views.
//
// An anchor is trusted as a benchmark when its positive pair is already close
// (raw cosine strictly above T). For a trusted anchor with positive similarity
// s_p, the possible false negatives are the negatives whose similarity lies
// closest to s_p, i.e. the smallest |sim(anchor, n) - s_p|.

#include <cstddef>
#include <vector>

#include "falsecl/numerics.hpp"

namespace falsecl {

struct SimilarityContext {
  Matrix embeddings;  // un-normalized, kept for the loss gradient
  Matrix z;           // row-normalized embeddings
  Matrix sim;         // raw cosine, z * z^T
  std::vector<std::size_t> positive_of;

  std::size_t n_anchors() const { return positive_of.size(); }
};

/// Throws ZeroRow (from normalization) or BadConfig when there are fewer than
/// four views or positive_of is not a fixed-point-free involution.
SimilarityContext build_similarity_context(const Matrix& embeddings,
                                           std::vector<std::size_t> positive_of);

/// Anchors whose positive similarity is strictly greater than `threshold`,
/// in ascending order.
std::vector<std::size_t> select_benchmark_anchors(const SimilarityContext& ctx, double threshold);

struct FnsFlags {
  std::vector<std::vector<std::size_t>> flagged;  // per anchor, ascending view index
  std::vector<bool> qualifying;

  static FnsFlags empty(std::size_t n_anchors);
  std::size_t total_flagged() const;
  bool any() const { return total_flagged() > 0; }
};

/// For each qualifying anchor, flags the k_max negatives with the smallest gap
/// to the anchor's positive similarity; equal gaps go to the lower view index.
FnsFlags determine_possible_fns(const SimilarityContext& ctx,
                                const std::vector<std::size_t>& qualifying_anchors,
                                std::size_t k_max);

/// Convenience: benchmark selection followed by determination.
FnsFlags detect_possible_fns(const SimilarityContext& ctx, double threshold, std::size_t k_max);

}  // namespace falsecl

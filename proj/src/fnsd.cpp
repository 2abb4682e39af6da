#include "falsecl/fnsd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace falsecl {

SimilarityContext build_similarity_context(const Matrix& embeddings,
                                           std::vector<std::size_t> positive_of) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (n < 4) throw BadConfig("similarity context needs at least 4 views (2 sources)");
  if (positive_of.size() != n) throw ShapeMismatch("positive_of size does not match view count");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = positive_of[i];
    if (p >= n || p == i || positive_of[p] != i) {
      throw BadConfig("positive_of must be a fixed-point-free involution (view " +
                      std::to_string(i) + ")");
    }
  }
  SimilarityContext ctx;
  ctx.embeddings = embeddings;
  ctx.z = numerics::l2_normalize_rows(embeddings);
  ctx.sim = numerics::gram(ctx.z);
  ctx.positive_of = std::move(positive_of);
  return ctx;
}

std::vector<std::size_t> select_benchmark_anchors(const SimilarityContext& ctx, double threshold) {
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < ctx.n_anchors(); ++i) {
    // Clamped so rounding above 1 cannot open a gate at T = 1.
    const double s = std::clamp(ctx.sim(static_cast<Eigen::Index>(i),
                                        static_cast<Eigen::Index>(ctx.positive_of[i])),
                                -1.0, 1.0);
    if (s > threshold) anchors.push_back(i);
  }
  return anchors;
}

FnsFlags FnsFlags::empty(std::size_t n_anchors) {
  FnsFlags f;
  f.flagged.assign(n_anchors, {});
  f.qualifying.assign(n_anchors, false);
  return f;
}

std::size_t FnsFlags::total_flagged() const {
  std::size_t total = 0;
  for (const auto& f : flagged) total += f.size();
  return total;
}

FnsFlags determine_possible_fns(const SimilarityContext& ctx,
                                const std::vector<std::size_t>& qualifying_anchors,
                                std::size_t k_max) {
  if (k_max < 1) throw BadConfig("k_max must be >= 1");
  const std::size_t n = ctx.n_anchors();
  FnsFlags flags = FnsFlags::empty(n);
  std::vector<std::pair<double, std::size_t>> gaps;
  gaps.reserve(n);
  for (std::size_t i : qualifying_anchors) {
    if (i >= n) throw BadConfig("qualifying anchor out of range");
    flags.qualifying[i] = true;
    const auto row = static_cast<Eigen::Index>(i);
    const double s_pos = ctx.sim(row, static_cast<Eigen::Index>(ctx.positive_of[i]));
    gaps.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || j == ctx.positive_of[i]) continue;
      gaps.emplace_back(std::abs(ctx.sim(row, static_cast<Eigen::Index>(j)) - s_pos), j);
    }
    // Lexicographic (gap, index) order realizes the lower-index tie rule.
    const std::size_t take = std::min(k_max, gaps.size());
    std::partial_sort(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(take), gaps.end());
    auto& out = flags.flagged[i];
    for (std::size_t t = 0; t < take; ++t) out.push_back(gaps[t].second);
    std::sort(out.begin(), out.end());
  }
  return flags;
}

FnsFlags detect_possible_fns(const SimilarityContext& ctx, double threshold, std::size_t k_max) {
  return determine_possible_fns(ctx, select_benchmark_anchors(ctx, threshold), k_max);
}

}  // namespace falsecl

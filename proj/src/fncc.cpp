#include "falsecl/fncc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace falsecl {

namespace {

std::vector<char> flag_mask(const FnsFlags& flags, std::size_t anchor, std::size_t n) {
  std::vector<char> mask(n, 0);
  for (std::size_t j : flags.flagged[anchor]) mask[j] = 1;
  return mask;
}

void check_flags(const SimilarityContext& ctx, const FnsFlags& flags) {
  const std::size_t n = ctx.n_anchors();
  if (flags.flagged.size() != n) throw ShapeMismatch("flags do not match the similarity context");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : flags.flagged[i]) {
      if (j >= n || j == i || j == ctx.positive_of[i]) {
        throw BadConfig("flag on anchor " + std::to_string(i) + " is not a negative");
      }
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw BadConfig("alpha must be in [0, 1]");
  if (!(tau > 0.0)) throw BadConfig("tau must be > 0");
  if (!(threshold >= -1.0 && threshold <= 1.0)) throw BadConfig("threshold must be in [-1, 1]");
  if (k_max < 1) throw BadConfig("k_max must be >= 1");
}

FnccTerms fncc_terms(const SimilarityContext& ctx, const FnsFlags& flags, std::size_t anchor,
                     const LossConfig& cfg) {
  check_flags(ctx, flags);
  const std::size_t n = ctx.n_anchors();
  if (anchor >= n) throw BadConfig("anchor out of range");
  const auto mask = flag_mask(flags, anchor, n);
  const auto row = static_cast<Eigen::Index>(anchor);
  const std::size_t pos = ctx.positive_of[anchor];
  FnccTerms t;
  double flagged_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == anchor) continue;
    const double u = std::exp(ctx.sim(row, static_cast<Eigen::Index>(j)) / cfg.tau);
    if (j == pos) {
      t.s_pos = u;
    } else if (mask[j]) {
      flagged_sum += u;
    } else {
      t.s_rest += u;
    }
  }
  t.s_ep = cfg.alpha * flagged_sum;
  t.s_wn = (1.0 - cfg.alpha) * flagged_sum;
  return t;
}

LossResult fncc_loss(const SimilarityContext& ctx, const FnsFlags& flags, const LossConfig& cfg) {
  cfg.validate();
  check_flags(ctx, flags);
  const std::size_t n = ctx.n_anchors();
  const double inv_tau = 1.0 / cfg.tau;
  const double inv_n = 1.0 / static_cast<double>(n);

  LossResult out;
  out.per_anchor.resize(n);
  // coef(i, j) = d loss / d sim(i, j), already including the 1/n of the mean.
  Matrix coef = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> u(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const std::size_t pos = ctx.positive_of[i];
    const auto mask = flag_mask(flags, i, n);

    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) shift = std::max(shift, ctx.sim(row, static_cast<Eigen::Index>(j)) * inv_tau);
    }
    // The denominator sums every non-anchor view in index order, regardless of
    // flags: S_EP + S_WN equals the flagged mass for any alpha.
    double flagged_sum = 0.0;
    double den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      u[j] = std::exp(ctx.sim(row, static_cast<Eigen::Index>(j)) * inv_tau - shift);
      den += u[j];
      if (mask[j]) flagged_sum += u[j];
    }
    const double num = u[pos] + cfg.alpha * flagged_sum;
    out.per_anchor[i] = std::log(den) - std::log(num);

    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double c = u[j] / den;
      if (j == pos) {
        c -= u[j] / num;
      } else if (mask[j]) {
        c -= cfg.alpha * u[j] / num;
      }
      coef(row, static_cast<Eigen::Index>(j)) = c * inv_tau * inv_n;
    }
  }

  double total = 0.0;
  for (double l : out.per_anchor) total += l;
  out.loss = total * inv_n;

  if (ctx.z.rows() == 0) return out;  // similarity-only context, nothing to differentiate

  // sim = z z^T, so d loss / d z = (coef + coef^T) z.
  const Matrix sym = coef + coef.transpose();
  const Matrix grad_z = numerics::matmul(sym, ctx.z);
  const Vector norms = numerics::row_norms(ctx.embeddings);
  out.grad_embeddings.resize(ctx.embeddings.rows(), ctx.embeddings.cols());
  for (Eigen::Index i = 0; i < grad_z.rows(); ++i) {
    double radial = 0.0;
    for (Eigen::Index k = 0; k < grad_z.cols(); ++k) radial += ctx.z(i, k) * grad_z(i, k);
    for (Eigen::Index k = 0; k < grad_z.cols(); ++k) {
      out.grad_embeddings(i, k) = (grad_z(i, k) - ctx.z(i, k) * radial) / norms(i);
    }
  }
  return out;
}

LossResult info_nce_loss(const SimilarityContext& ctx, const LossConfig& cfg) {
  return fncc_loss(ctx, FnsFlags::empty(ctx.n_anchors()), cfg);
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

double fncc_grad_check(const Matrix& embeddings, const std::vector<std::size_t>& positive_of,
                       const FnsFlags& flags, const LossConfig& cfg, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) throw BadConfig("epsilon must be in [1e-7, 1e-4]");
  const LossResult analytic = fncc_loss(build_similarity_context(embeddings, positive_of), flags, cfg);
  auto loss_at = [&](const Matrix& e) {
    return fncc_loss(build_similarity_context(e, positive_of), flags, cfg).loss;
  };
  double worst = 0.0;
  Matrix probe = embeddings;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    for (Eigen::Index k = 0; k < embeddings.cols(); ++k) {
      const double orig = probe(i, k);
      probe(i, k) = orig + epsilon;
      const double up = loss_at(probe);
      probe(i, k) = orig - epsilon;
      const double down = loss_at(probe);
      probe(i, k) = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      worst = std::max(worst, relative_error(analytic.grad_embeddings(i, k), numeric));
    }
  }
  return worst;
}

}  // namespace falsecl

#pragma once

// Dense arithmetic used by the rest of the library. Every reduction here runs
// in ascending index order so results are bit-identical across runs; Eigen's
// blocked GEMM is deliberately not used for products.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "falsecl/errors.hpp"

namespace falsecl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

namespace numerics {

inline constexpr double kMinRowNorm = 1e-12;

/// Plain product a * b. Each output entry is accumulated over k = 0, 1, ...
/// starting from zero, exactly like a scalar triple loop.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const MatrixX<Scalar> lhs = a;
  const MatrixX<Scalar> rhs = b;
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(lhs.rows(), rhs.cols());
  // j-k-i order walks contiguous columns; per-entry order is still k ascending.
  for (Eigen::Index j = 0; j < rhs.cols(); ++j) {
    for (Eigen::Index k = 0; k < lhs.cols(); ++k) {
      const Scalar bkj = rhs(k, j);
      for (Eigen::Index i = 0; i < lhs.rows(); ++i) {
        out(i, j) += lhs(i, k) * bkj;
      }
    }
  }
  return out;
}

/// a * a^T, computed on the upper triangle and mirrored, so the result is
/// exactly symmetric.
template <typename Derived>
MatrixX<typename Derived::Scalar> gram(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> m = a;
  const Eigen::Index n = m.rows();
  MatrixX<Scalar> g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      Scalar s(0);
      for (Eigen::Index k = 0; k < m.cols(); ++k) {
        s += m(i, k) * m(j, k);
      }
      g(i, j) = s;
      g(j, i) = s;
    }
  }
  return g;
}

template <typename Derived>
VectorX<typename Derived::Scalar> row_norms(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> norms(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Scalar s(0);
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      s += m(i, k) * m(i, k);
    }
    norms(i) = std::sqrt(s);
  }
  return norms;
}

/// Scales every row to unit Euclidean norm. Throws ZeroRow when a row norm is
/// at or below kMinRowNorm.
template <typename Derived>
MatrixX<typename Derived::Scalar> l2_normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> norms = row_norms(m);
  MatrixX<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!(norms(i) > Scalar(kMinRowNorm))) {
      throw ZeroRow("l2_normalize_rows: row " + std::to_string(i) + " has norm <= 1e-12");
    }
    out.row(i) = m.row(i) / norms(i);
  }
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace numerics
}  // namespace falsecl

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "safegate/error.hpp"

namespace safegate {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// The pipeline runs in double precision end to end; the free functions stay
/// templated on the scalar so numeric behaviour can be stressed at other
/// precisions in tests.
using Embedding = Vec<double>;
using SymMatrix = Mat<double>;

template <typename Scalar>
Scalar cosine_similarity(const Vec<Scalar>& a, const Vec<Scalar>& b) {
  if (a.size() != b.size()) {
    throw Error(errc::dimension_mismatch,
                "cosine_similarity: dim " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) {
    throw Error(errc::zero_norm, "cosine_similarity: zero-norm input");
  }
  const Scalar c = a.dot(b) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
Vec<Scalar> normalize(const Vec<Scalar>& v) {
  const Scalar n = v.norm();
  if (n == Scalar(0)) {
    throw Error(errc::zero_norm, "normalize: zero-norm input");
  }
  return v / n;
}

template <typename Scalar>
Vec<Scalar> mean_vector(const std::vector<Vec<Scalar>>& vs) {
  if (vs.empty()) throw Error(errc::empty_set, "mean_vector: empty input");
  const Eigen::Index dim = vs.front().size();
  Vec<Scalar> acc = Vec<Scalar>::Zero(dim);
  for (const auto& v : vs) {
    if (v.size() != dim) {
      throw Error(errc::dimension_mismatch, "mean_vector: mixed dimensions");
    }
    acc += v;
  }
  return acc / Scalar(vs.size());
}

/// Population covariance (1/n). With centered=false this is the raw second
/// moment (1/n) sum v v^T; useful when the mean direction is captured
/// elsewhere and must stay visible to the PCA.
template <typename Scalar>
Mat<Scalar> covariance(const std::vector<Vec<Scalar>>& vs, bool centered) {
  if (vs.empty()) throw Error(errc::empty_set, "covariance: empty input");
  if (vs.size() < 2) {
    throw Error(errc::too_few, "covariance: need at least 2 vectors, got " +
                                   std::to_string(vs.size()));
  }
  const Eigen::Index dim = vs.front().size();
  Vec<Scalar> mu = centered ? mean_vector(vs) : Vec<Scalar>::Zero(dim);
  Mat<Scalar> acc = Mat<Scalar>::Zero(dim, dim);
  for (const auto& v : vs) {
    if (v.size() != dim) {
      throw Error(errc::dimension_mismatch, "covariance: mixed dimensions");
    }
    const Vec<Scalar> c = v - mu;
    acc.noalias() += c * c.transpose();
  }
  return acc / Scalar(vs.size());
}

template <typename Scalar>
bool is_symmetric(const Mat<Scalar>& m, Scalar rel_tol = Scalar(1e-12)) {
  if (m.rows() == 0 || m.rows() != m.cols()) return false;
  if (!m.allFinite()) return false;
  const Scalar scale = std::max(Scalar(1), m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

template <typename Scalar>
struct EigenDecomposition {
  Mat<Scalar> vectors;  // columns, orthonormal, eigenvalue-descending order
  Vec<Scalar> values;
};

struct JacobiOptions {
  int max_sweeps = 100;
  double off_diag_tol = 1e-10;
};

/// Top-k eigenpairs of a symmetric matrix by cyclic Jacobi rotations.
///
/// Deterministic: fixed sweep order, no randomized start. Each returned
/// eigenvector is sign-fixed so its largest-magnitude component (lowest index
/// on ties) is positive; for degenerate eigenvalues any orthonormal basis of
/// the eigenspace may come back.
template <typename Scalar>
EigenDecomposition<Scalar> top_k_eigenvectors(const Mat<Scalar>& m,
                                              Eigen::Index k,
                                              const JacobiOptions& opt = {}) {
  if (!is_symmetric(m)) {
    throw Error(errc::not_symmetric,
                "top_k_eigenvectors: matrix is not symmetric");
  }
  const Eigen::Index n = m.rows();
  if (k < 1 || k > n) {
    throw Error(errc::k_out_of_range,
                "top_k_eigenvectors: k=" + std::to_string(k) + " with dim " +
                    std::to_string(n));
  }

  Mat<Scalar> a = (m + m.transpose()) / Scalar(2);
  Mat<Scalar> v = Mat<Scalar>::Identity(n, n);
  const Scalar scale = std::max(Scalar(1), a.cwiseAbs().maxCoeff());
  const Scalar stop = Scalar(opt.off_diag_tol) * scale;

  auto max_off_diag = [&a, n]() {
    Scalar mx = 0;
    for (Eigen::Index p = 0; p + 1 < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q)
        mx = std::max(mx, std::abs(a(p, q)));
    return mx;
  };

  bool converged = max_off_diag() <= stop;
  for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (std::abs(apq) <= stop) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Scalar c = Scalar(1) / std::sqrt(t * t + 1);
        const Scalar s = t * c;
        for (Eigen::Index i = 0; i < n; ++i) {  // A <- A J
          const Scalar aip = a(i, p);
          const Scalar aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {  // A <- J^T A
          const Scalar api = a(p, i);
          const Scalar aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        for (Eigen::Index i = 0; i < n; ++i) {  // V <- V J
          const Scalar vip = v(i, p);
          const Scalar viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
    converged = max_off_diag() <= stop;
  }
  if (!converged) {
    throw Error(errc::no_convergence,
                "top_k_eigenvectors: no convergence after " +
                    std::to_string(opt.max_sweeps) + " sweeps");
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&a](Eigen::Index l, Eigen::Index r) {
    return a(l, l) > a(r, r);
  });

  EigenDecomposition<Scalar> out;
  out.vectors.resize(n, k);
  out.values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.values(j) = a(src, src);
    Vec<Scalar> col = v.col(src);
    Eigen::Index imax = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (std::abs(col(i)) > std::abs(col(imax))) imax = i;
    }
    if (col(imax) < Scalar(0)) col = -col;
    out.vectors.col(j) = col;
  }
  return out;
}

}  // namespace safegate

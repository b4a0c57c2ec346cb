#ifndef LINDEPS_LINALG_HPP
#define LINDEPS_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "lindeps/errors.hpp"
#include "lindeps/tensor.hpp"

namespace lindeps {

/// Result of A·P = Q·R with column pivoting.
///
/// `perm[k]` is the original column placed at position k, so column k of
/// A·P is column `perm[k]` of A. `diag` holds the diagonal of R in
/// factorization order; it is normalized to be non-negative.
struct PqrFactorization {
  Tensor q;                       // m×k, empty when not requested
  Tensor r;                       // k×n
  std::vector<std::size_t> perm;  // n entries
  std::vector<double> diag;       // k entries
};

enum class QForm { explicit_q, omit };

/// Standard matrix product with fixed i-p-j loop nesting.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects 2-D tensors");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_string(a.shape()) +
                     " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  BasicTensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* out_row = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a(i, p);
      const T* b_row = &b(p, 0);
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aip * b_row[j];
    }
  }
  return out;
}

namespace detail {

/// Column-major m×n work matrix for the Householder kernels.
struct ColumnMajor {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> a;

  double* col(std::size_t j) { return a.data() + j * m; }
  const double* col(std::size_t j) const { return a.data() + j * m; }
  double& at(std::size_t i, std::size_t j) { return a[j * m + i]; }
};

inline ColumnMajor to_column_major(const Tensor& t) {
  ColumnMajor cm{t.rows(), t.cols(), std::vector<double>(t.size())};
  for (std::size_t i = 0; i < cm.m; ++i)
    for (std::size_t j = 0; j < cm.n; ++j) cm.at(i, j) = t(i, j);
  return cm;
}

/// The rows of a C×N row-major tensor are exactly the columns of its
/// N×C transpose in column-major order.
inline ColumnMajor transpose_to_column_major(const Tensor& t) {
  return ColumnMajor{t.cols(), t.rows(), t.storage()};
}

inline double norm2(const double* x, std::size_t len) {
  double scale = 0.0, ssq = 1.0;
  for (std::size_t i = 0; i < len; ++i) {
    if (x[i] != 0.0) {
      const double v = std::abs(x[i]);
      if (scale < v) {
        ssq = 1.0 + ssq * (scale / v) * (scale / v);
        scale = v;
      } else {
        ssq += (v / scale) * (v / scale);
      }
    }
  }
  return scale * std::sqrt(ssq);
}

/// Generates a reflector H = I - tau·v·vᵀ (v[0] = 1 implicit) zeroing
/// x[1..len). On return x[0] holds beta and x[1..len) holds v[1..len).
inline double make_reflector(double* x, std::size_t len) {
  if (len <= 1) return 0.0;
  const double xnorm = norm2(x + 1, len - 1);
  if (xnorm == 0.0) return 0.0;
  const double alpha = x[0];
  const double beta = -std::copysign(std::hypot(alpha, xnorm), alpha);
  const double tau = (beta - alpha) / beta;
  const double scale = 1.0 / (alpha - beta);
  for (std::size_t i = 1; i < len; ++i) x[i] *= scale;
  x[0] = beta;
  return tau;
}

/// Applies the reflector stored in v (v[0] = 1 implicit) to y.
inline void apply_reflector(const double* v, double tau, double* y, std::size_t len) {
  if (tau == 0.0) return;
  double w = y[0];
  for (std::size_t i = 1; i < len; ++i) w += v[i] * y[i];
  w *= tau;
  y[0] -= w;
  for (std::size_t i = 1; i < len; ++i) y[i] -= w * v[i];
}

/// Householder QR in place. With `pivot`, performs greedy max-column-norm
/// pivoting using downdated norms that are recomputed exactly whenever a
/// downdate loses three orders of magnitude against the last exact value.
inline void householder_qr(ColumnMajor& w, bool pivot, std::vector<std::size_t>& perm,
                           std::vector<double>& taus) {
  const std::size_t m = w.m, n = w.n, k = std::min(m, n);
  perm.resize(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  taus.assign(k, 0.0);

  std::vector<double> norms(n), reference(n);
  if (pivot) {
    for (std::size_t j = 0; j < n; ++j) norms[j] = reference[j] = norm2(w.col(j), m);
  }

  for (std::size_t step = 0; step < k; ++step) {
    if (pivot) {
      std::size_t best = step;
      for (std::size_t j = step + 1; j < n; ++j) {
        if (norms[j] > norms[best]) best = j;
      }
      if (best != step) {
        std::swap_ranges(w.col(step), w.col(step) + m, w.col(best));
        std::swap(perm[step], perm[best]);
        std::swap(norms[step], norms[best]);
        std::swap(reference[step], reference[best]);
      }
    }

    double* head = w.col(step) + step;
    const std::size_t len = m - step;
    taus[step] = make_reflector(head, len);
    for (std::size_t j = step + 1; j < n; ++j) {
      apply_reflector(head, taus[step], w.col(j) + step, len);
    }

    if (!pivot) continue;
    for (std::size_t j = step + 1; j < n; ++j) {
      if (norms[j] == 0.0) continue;
      const double ratio = std::abs(w.at(step, j)) / norms[j];
      const double shrink = std::max(0.0, (1.0 - ratio) * (1.0 + ratio));
      const double downdated = norms[j] * std::sqrt(shrink);
      if (downdated <= 1e-3 * reference[j]) {
        norms[j] = reference[j] = norm2(w.col(j) + step + 1, m - step - 1);
      } else {
        norms[j] = downdated;
      }
    }
  }
}

inline void require_finite(const Tensor& m, const char* what) {
  const std::size_t bad = m.first_non_finite();
  if (bad == m.size()) return;
  std::string where = std::to_string(bad);
  if (m.rank() == 2) {
    where = "(" + std::to_string(bad / m.cols()) + "," + std::to_string(bad % m.cols()) + ")";
  }
  throw NumericalError(std::string(what) + ": non-finite value at index " + where);
}

inline PqrFactorization finish_pqr(ColumnMajor& w, std::vector<std::size_t> perm,
                                   const std::vector<double>& taus, QForm q_form) {
  const std::size_t m = w.m, n = w.n, k = std::min(m, n);
  PqrFactorization f;
  f.perm = std::move(perm);
  f.r = Tensor({k, n});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < n; ++j) f.r(i, j) = w.at(i, j);

  std::vector<double> sign(k, 1.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (f.r(i, i) < 0.0) {
      sign[i] = -1.0;
      for (std::size_t j = i; j < n; ++j) f.r(i, j) = -f.r(i, j);
    }
  }
  f.diag.resize(k);
  for (std::size_t i = 0; i < k; ++i) f.diag[i] = f.r(i, i);

  if (q_form == QForm::explicit_q) {
    ColumnMajor q{m, k, std::vector<double>(m * k, 0.0)};
    for (std::size_t j = 0; j < k; ++j) q.at(j, j) = 1.0;
    for (std::size_t step = k; step-- > 0;) {
      for (std::size_t j = step; j < k; ++j) {
        apply_reflector(w.col(step) + step, taus[step], q.col(j) + step, m - step);
      }
    }
    f.q = Tensor({m, k});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) f.q(i, j) = sign[j] * q.at(i, j);
  }
  return f;
}

}  // namespace detail

/// Pivoted Householder QR of a 2-D tensor (Businger–Golub column pivoting).
inline PqrFactorization pqr_decompose(const Tensor& m, QForm q_form = QForm::explicit_q) {
  if (m.rank() != 2) throw ShapeError("pqr_decompose expects a 2-D tensor");
  detail::require_finite(m, "pqr_decompose");
  auto work = detail::to_column_major(m);
  std::vector<std::size_t> perm;
  std::vector<double> taus;
  detail::householder_qr(work, true, perm, taus);
  return detail::finish_pqr(work, std::move(perm), taus, q_form);
}

/// Pivoted QR of the transpose of a C×N tensor, without materializing the
/// transpose. Channel selection factors Aᵀ, whose columns are the rows of A.
inline PqrFactorization pqr_decompose_transposed(const Tensor& a,
                                                 QForm q_form = QForm::omit) {
  if (a.rank() != 2) throw ShapeError("pqr_decompose_transposed expects a 2-D tensor");
  detail::require_finite(a, "pqr_decompose");
  auto work = detail::transpose_to_column_major(a);
  std::vector<std::size_t> perm;
  std::vector<double> taus;
  detail::householder_qr(work, true, perm, taus);
  return detail::finish_pqr(work, std::move(perm), taus, q_form);
}

/// Number of diagonal entries with |d_k| >= tau·|d_0|. Exact zeros never
/// count, so tau = 0 still discards exactly dependent columns.
inline std::size_t effective_rank(const PqrFactorization& f, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) {
    throw Error(ErrorKind::usage, "tau must lie in [0,1), got " + std::to_string(tau));
  }
  if (f.diag.empty() || f.diag.front() == 0.0) return 0;
  const double cutoff = tau * std::abs(f.diag.front());
  return static_cast<std::size_t>(std::count_if(f.diag.begin(), f.diag.end(), [&](double d) {
    return std::abs(d) >= cutoff && d != 0.0;
  }));
}

/// Solves min ‖L·A′ − A‖_F row by row through a thin Householder QR of A′ᵀ.
/// aprime is C′×N with full row rank, a is C×N; returns L as C×C′.
inline Tensor least_squares(const Tensor& aprime, const Tensor& a) {
  if (aprime.rank() != 2 || a.rank() != 2) throw ShapeError("least_squares expects 2-D tensors");
  const std::size_t kept = aprime.rows(), n = aprime.cols(), total = a.rows();
  if (a.cols() != n) {
    throw ShapeError("least_squares column mismatch: " + shape_string(aprime.shape()) + " vs " +
                     shape_string(a.shape()));
  }
  if (n < kept) {
    throw ShapeError("least_squares needs N >= C', got N=" + std::to_string(n) +
                     " C'=" + std::to_string(kept));
  }
  detail::require_finite(aprime, "least_squares");
  detail::require_finite(a, "least_squares");

  auto work = detail::transpose_to_column_major(aprime);
  double scale = 0.0;
  for (std::size_t j = 0; j < kept; ++j) scale = std::max(scale, detail::norm2(work.col(j), n));
  std::vector<std::size_t> perm;
  std::vector<double> taus;
  detail::householder_qr(work, false, perm, taus);

  const double tol = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;
  for (std::size_t i = 0; i < kept; ++i) {
    const double d = std::abs(work.at(i, i));
    if (!(d > tol)) {
      throw NumericalError("least_squares: retained rows are rank deficient (|R[" +
                           std::to_string(i) + "," + std::to_string(i) +
                           "]| = " + std::to_string(d) + ", tolerance " + std::to_string(tol) + ")");
    }
  }

  Tensor l({total, kept});
  std::vector<double> rhs(n);
  for (std::size_t row = 0; row < total; ++row) {
    std::copy_n(a.row(row).begin(), n, rhs.begin());
    for (std::size_t step = 0; step < kept; ++step) {
      detail::apply_reflector(work.col(step) + step, taus[step], rhs.data() + step, n - step);
    }
    for (std::size_t i = kept; i-- > 0;) {
      double acc = rhs[i];
      for (std::size_t j = i + 1; j < kept; ++j) acc -= work.at(i, j) * l(row, j);
      l(row, i) = acc / work.at(i, i);
    }
  }
  return l;
}

}  // namespace lindeps

#endif  // LINDEPS_LINALG_HPP

// Dense symmetric linear algebra and scalar root finding.
//
// Thin layer over Eigen: containers and the symmetric eigensolver come from
// Eigen, while the Cholesky factorization and the bisection root finder are
// written out so failure semantics (negligible pivot, missing sign change)
// map to the library's exception types exactly.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>

#include "gpfbst/errors.hpp"

namespace gpfbst {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Relative symmetry tolerance for matrices accepted as symmetric.
inline constexpr double kSymTol = 1e-12;

// Relative eigenvalue/singular-value cutoff for pseudo-inverses and for
// splitting quadratic-form weights from deterministic directions.
inline constexpr double kRankCutoff = 1e-10;

// Cholesky pivots at or below this fraction of the largest diagonal entry
// count as failures; round-off on an exactly singular matrix can land on
// either side of zero, so a pure sign test would be nondeterministic.
inline constexpr double kPivotRel = 1e-13;

inline bool is_symmetric(const Matrix& a, double tol = kSymTol) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline void require_symmetric(const Matrix& a, const char* where) {
    if (!is_symmetric(a))
        throw NumericalError(std::string(where) + ": matrix is not symmetric");
}

// Force exact symmetry (averages the off-diagonal round-off away).
inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/** Lower-triangular Cholesky factor of a symmetric positive definite matrix.
 *  Throws NotPositiveDefinite as soon as a pivot fails to be positive. */
inline Matrix cholesky(const Matrix& a) {
    require_symmetric(a, "cholesky");
    const Eigen::Index n = a.rows();
    const double pivot_floor =
        n > 0 ? kPivotRel * a.diagonal().cwiseAbs().maxCoeff() : 0.0;
    Matrix l = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = a(j, j) - l.row(j).head(j).squaredNorm();
        if (!(d > pivot_floor))
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(j) +
                                      " is not positive");
        l(j, j) = std::sqrt(d);
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double s = a(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

// x with a x = b, via the Cholesky factor of a.
inline Vector solve_spd(const Matrix& a, const Vector& b) {
    const Matrix l = cholesky(a);
    Vector y = l.triangularView<Eigen::Lower>().solve(b);
    return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

inline Matrix solve_spd(const Matrix& a, const Matrix& b) {
    const Matrix l = cholesky(a);
    Matrix y = l.triangularView<Eigen::Lower>().solve(b);
    return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

struct JitteredFactor {
    Matrix l;             // lower Cholesky factor of a + jitter * I
    double jitter = 0.0;  // ridge actually applied (0 when none was needed)
};

/** Cholesky with the standard jitter ladder: on failure add
 *  1e-10 * trace/dim to the diagonal and escalate tenfold, at most three
 *  escalations, then give up with NotPositiveDefinite. */
inline JitteredFactor cholesky_jittered(const Matrix& a) {
    const double base = 1e-10 * a.trace() / static_cast<double>(a.rows());
    double jitter = 0.0;
    for (int attempt = 0; attempt < 5; ++attempt) {
        try {
            Matrix m = a;
            if (jitter > 0.0) m.diagonal().array() += jitter;
            return {cholesky(m), jitter};
        } catch (const NotPositiveDefinite&) {
            if (attempt == 4) throw;
            jitter = (jitter == 0.0) ? std::abs(base) : 10.0 * jitter;
            if (jitter == 0.0) jitter = 1e-300;  // zero-trace corner
        }
    }
    throw NotPositiveDefinite("cholesky_jittered: exhausted jitter ladder");
}

struct EigenDecomp {
    Vector values;   // descending
    Matrix vectors;  // columns, aligned with values
};

/** Symmetric eigendecomposition, eigenvalues sorted descending. */
inline EigenDecomp sym_eigen(const Matrix& a) {
    require_symmetric(a, "sym_eigen");
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
    if (es.info() != Eigen::Success)
        throw NoConvergence("sym_eigen: eigensolver did not converge");
    const Eigen::Index n = a.rows();
    EigenDecomp d;
    d.values = Vector(n);
    d.vectors = Matrix(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.values(i) = es.eigenvalues()(n - 1 - i);
        d.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return d;
}

/** Moore-Penrose pseudo-inverse of a symmetric matrix: eigenvalues with
 *  |lambda| < cutoff * max|lambda| are treated as exact zeros. */
inline Matrix pinv(const Matrix& a, double cutoff = kRankCutoff) {
    const EigenDecomp d = sym_eigen(a);
    const double lmax = d.values.cwiseAbs().maxCoeff();
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    if (lmax == 0.0) return out;
    for (Eigen::Index i = 0; i < d.values.size(); ++i) {
        if (std::abs(d.values(i)) >= cutoff * lmax)
            out += (1.0 / d.values(i)) * d.vectors.col(i) * d.vectors.col(i).transpose();
    }
    return symmetrize(out);
}

/** Bisection root of f on [lo, hi]; requires a sign change. Returns the
 *  midpoint once |f| <= tol or the bracket width shrinks below tol. */
inline double find_root(const std::function<double(double)>& f, double lo, double hi,
                        double tol = 1e-10) {
    if (!(lo <= hi)) throw NoBracket("find_root: empty interval");
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw NoBracket("find_root: f(lo) and f(hi) have the same sign");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (std::abs(fm) <= tol || (hi - lo) <= tol) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace gpfbst

// Gaussian process prior/posterior over a covariate grid, path sampling, and
// the collapse of repeated design rows into counts and group means.
//
// Covariate points are rows of an Eigen matrix (n points x d coordinates);
// the scalar-covariate case is d = 1.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "gpfbst/errors.hpp"
#include "gpfbst/numerics.hpp"
#include "gpfbst/rng.hpp"

namespace gpfbst {

using PointMatrix = Eigen::MatrixXd;  // one covariate point per row
using MeanFn = std::function<double(const Eigen::RowVectorXd&)>;

inline MeanFn constant_mean(double c) {
    return [c](const Eigen::RowVectorXd&) { return c; };
}

inline PointMatrix points_1d(const Vector& t) {
    PointMatrix x(t.size(), 1);
    x.col(0) = t;
    return x;
}

enum class KernelFamily { Exponential, SquaredExponential };

struct Kernel {
    KernelFamily family = KernelFamily::Exponential;
    double length_scale = 1.0;
    double amplitude = 1.0;

    double operator()(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) const {
        const double r = (x - y).norm();
        switch (family) {
            case KernelFamily::Exponential:
                return amplitude * std::exp(-r / length_scale);
            case KernelFamily::SquaredExponential:
                return amplitude * std::exp(-0.5 * r * r / (length_scale * length_scale));
        }
        throw NumericalError("kernel: unknown family");
    }
};

inline Matrix kernel_matrix(const Kernel& k, const PointMatrix& x, const PointMatrix& y) {
    Matrix out(x.rows(), y.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < y.rows(); ++j) out(i, j) = k(x.row(i), y.row(j));
    return out;
}

struct GpPrior {
    MeanFn mean = constant_mean(0.0);
    Kernel kernel;
    double noise_var = 1e-2;
};

struct GpPosterior {
    PointMatrix grid;  // evaluation points, one per row
    Vector mean;
    Matrix cov;        // symmetric PSD
};

inline Vector eval_mean(const MeanFn& m, const PointMatrix& x) {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = m(x.row(i));
    return out;
}

/** Conjugate GP regression update under iid Gaussian noise.
 *
 *  mean = m(grid) + K(grid,X) (K(X,X)+s2 I)^-1 (y - m(X))
 *  cov  = K(grid,grid) - K(grid,X) (K(X,X)+s2 I)^-1 K(X,grid)
 *
 *  The observation Gram matrix gets the standard jitter ladder if it is not
 *  numerically positive definite as given. */
inline GpPosterior posterior(const GpPrior& prior, const PointMatrix& x, const Vector& y,
                             const PointMatrix& grid) {
    if (x.rows() != y.size())
        throw NumericalError("posterior: x and y sizes disagree");
    if (x.rows() == 0) throw NumericalError("posterior: no observations");
    if (grid.cols() != x.cols())
        throw NumericalError("posterior: grid dimension disagrees with x");
    if (!(prior.noise_var > 0.0))
        throw NumericalError("posterior: noise variance must be positive");

    Matrix kxx = kernel_matrix(prior.kernel, x, x);
    kxx.diagonal().array() += prior.noise_var;
    const JitteredFactor f = cholesky_jittered(symmetrize(kxx));

    const Matrix kgx = kernel_matrix(prior.kernel, grid, x);
    const Vector resid = y - eval_mean(prior.mean, x);

    auto solve = [&](const Matrix& rhs) -> Matrix {
        Matrix z = f.l.triangularView<Eigen::Lower>().solve(rhs);
        return f.l.transpose().triangularView<Eigen::Upper>().solve(z);
    };

    GpPosterior post;
    post.grid = grid;
    post.mean = eval_mean(prior.mean, grid) + kgx * solve(resid);
    post.cov = symmetrize(kernel_matrix(prior.kernel, grid, grid) -
                          kgx * solve(kgx.transpose()));
    return post;
}

/** Draw sample paths from the posterior: rows of the result are paths on
 *  post.grid. Uses the eigenvalue square root of the covariance (tiny
 *  negative eigenvalues clamp to zero), so singular covariances are fine. */
inline Matrix draw_paths(const GpPosterior& post, int count, std::uint64_t seed) {
    if (count <= 0) throw NumericalError("draw_paths: count must be positive");
    const EigenDecomp d = sym_eigen(post.cov);
    Vector root = d.values.cwiseMax(0.0).cwiseSqrt();
    NormalSampler z(seed);
    const Eigen::Index m = post.mean.size();
    Matrix paths(count, m);
    for (int p = 0; p < count; ++p) {
        Vector u(m);
        for (Eigen::Index i = 0; i < m; ++i) u(i) = z() * root(i);
        paths.row(p) = (post.mean + d.vectors * u).transpose();
    }
    return paths;
}

struct CollapsedData {
    PointMatrix unique_rows;  // first-appearance order
    Vector counts;            // replication count per unique row
    Vector group_means;       // mean response per unique row
    double within_ss = 0.0;   // sum of squares of y about its group mean
};

/** Group exactly repeated covariate rows: unique rows in first-appearance
 *  order, their counts, group mean responses, and the within-group sum of
 *  squares. For any h, ||y - h(X)||^2 = wrss(h) + within_ss. */
inline CollapsedData collapse(const PointMatrix& x, const Vector& y) {
    if (x.rows() != y.size()) throw NumericalError("collapse: x and y sizes disagree");
    if (x.rows() == 0) throw EmptyDataset("collapse: no rows");

    std::vector<Eigen::Index> first;   // row index of each unique row
    std::vector<double> count, total;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::Index g = -1;
        for (std::size_t u = 0; u < first.size(); ++u) {
            if (x.row(first[u]) == x.row(i)) {
                g = static_cast<Eigen::Index>(u);
                break;
            }
        }
        if (g < 0) {
            first.push_back(i);
            count.push_back(1.0);
            total.push_back(y(i));
        } else {
            count[g] += 1.0;
            total[g] += y(i);
        }
    }

    CollapsedData c;
    const auto nu = static_cast<Eigen::Index>(first.size());
    c.unique_rows = PointMatrix(nu, x.cols());
    c.counts = Vector(nu);
    c.group_means = Vector(nu);
    for (Eigen::Index u = 0; u < nu; ++u) {
        c.unique_rows.row(u) = x.row(first[u]);
        c.counts(u) = count[u];
        c.group_means(u) = total[u] / count[u];
    }
    c.within_ss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index u = 0; u < nu; ++u) {
            if (x.row(first[u]) == x.row(i)) {
                const double r = y(i) - c.group_means(u);
                c.within_ss += r * r;
                break;
            }
        }
    }
    return c;
}

/** Weighted residual sum of squares (h - ybar)' D (h - ybar) of a function's
 *  values h on the unique rows, D = diag(counts). */
inline double wrss(const Vector& h, const CollapsedData& c) {
    if (h.size() != c.group_means.size())
        throw NumericalError("wrss: h length disagrees with unique rows");
    const Vector r = h - c.group_means;
    return (r.array().square() * c.counts.array()).sum();
}

}  // namespace gpfbst

// The four adequacy tests of a linear model under a GP posterior: precise
// and pragmatic hypotheses, each over a finite covariate domain or on the
// observed-design (infinite-domain) scale. Decisions follow the HPD-set
// geometry; e-values are posterior survival at the relevant statistic.
//
// Both constrained minimizations reduce, in the basis that diagonalizes the
// constraint against the ellipsoid shape, to a one-dimensional secular
// equation in the Lagrange multiplier, solved by safeguarded Newton.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "gpfbst/errors.hpp"
#include "gpfbst/gchi2.hpp"
#include "gpfbst/gp.hpp"
#include "gpfbst/hypothesis.hpp"
#include "gpfbst/measure.hpp"
#include "gpfbst/numerics.hpp"
#include "gpfbst/special.hpp"

namespace gpfbst {

// NumericalFailure per contract: the multiplier bracket cannot be set up or
// an algebraic invariant breaks during the search.
struct NumericalFailure : NumericalError {
    using NumericalError::NumericalError;
};

enum class FbstMethod { Thm1Finite, Thm1Infinite, Thm2Finite, Thm2Infinite };

inline const char* method_name(FbstMethod m) {
    switch (m) {
        case FbstMethod::Thm1Finite: return "thm1-finite";
        case FbstMethod::Thm1Infinite: return "thm1-infinite";
        case FbstMethod::Thm2Finite: return "thm2-finite";
        case FbstMethod::Thm2Infinite: return "thm2-infinite";
    }
    return "?";
}

struct FbstOutcome {
    double statistic = 0.0;  // tangency/GLS statistic on the test's scale
    double threshold = 0.0;  // critical value the statistic is compared to
    double e_value = 0.0;
    double alpha = 0.05;
    bool reject = false;
    FbstMethod method = FbstMethod::Thm1Finite;
    std::optional<double> lambda_star;  // active-constraint multiplier
    std::optional<double> s_star;       // literal s-condition diagnostic
    std::optional<bool> s_exists;
    std::string notes;
};

struct PragmaticSpec {
    double epsilon = 0.0;
    CovariateMeasure measure;
    LinearBasis basis;
};

// Reported e-values clamp to exact 0/1 beyond certified tail mass.
inline double clamp_e_value(double e) {
    if (e < 1e-12) return 0.0;
    if (e > 1.0 - 1e-12) return 1.0;
    return e;
}

struct QcqpResult {
    double min_value = 0.0;
    Vector h_star;
    double lambda_star = 0.0;
    double kkt_residual = 0.0;
};

/** Minimize (h - mu0)' Q^-1 (h - mu0) subject to h' N h <= eps2.
 *
 *  With Q = LL' and A = L'NL = V diag(gamma) V', the KKT point is
 *  h(lambda) = L V (I + lambda gamma)^-1 V' L^-1 mu0 and the constraint
 *  value g(lambda) = sum gamma_i c_i^2 / (1 + lambda gamma_i)^2 decreases
 *  monotonically, so the active multiplier is a safeguarded-Newton root of
 *  g(lambda) = eps2. */
inline QcqpResult qcqp_min(const Vector& mu0, const Matrix& q_shape, const Matrix& n_constraint,
                           double eps2) {
    require_symmetric(n_constraint, "qcqp_min");
    if (!(eps2 >= 0.0)) throw NumericalFailure("qcqp_min: negative bound");

    QcqpResult r;
    const double g_at_center = mu0.dot(n_constraint * mu0);
    if (g_at_center <= eps2) {
        r.min_value = 0.0;
        r.h_star = mu0;
        r.lambda_star = 0.0;
        r.kkt_residual = 0.0;
        return r;
    }

    const Matrix l = cholesky(q_shape);
    const Matrix a = symmetrize(l.transpose() * n_constraint * l);
    const EigenDecomp ed = sym_eigen(a);
    const Vector gamma = ed.values.cwiseMax(0.0);
    const Vector c = ed.vectors.transpose() *
                     l.triangularView<Eigen::Lower>().solve(mu0);

    auto g = [&](double lam) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < gamma.size(); ++i) {
            const double denom = 1.0 + lam * gamma(i);
            s += gamma(i) * c(i) * c(i) / (denom * denom);
        }
        return s;
    };
    auto g_deriv = [&](double lam) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < gamma.size(); ++i) {
            const double denom = 1.0 + lam * gamma(i);
            s += -2.0 * gamma(i) * gamma(i) * c(i) * c(i) / (denom * denom * denom);
        }
        return s;
    };

    double lo = 0.0, hi = 1.0, g_lo = g(0.0);
    int doublings = 0;
    while (g(hi) > eps2) {
        lo = hi;
        hi *= 2.0;
        if (++doublings > 400)
            throw NumericalFailure("qcqp_min: cannot bracket the multiplier");
    }
    if (g(hi) > g_lo * (1.0 + 1e-9))
        throw NumericalFailure("qcqp_min: constraint value is not decreasing in lambda");

    double lam = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double val = g(lam) - eps2;
        if (std::abs(val) <= 1e-13 * std::max({1.0, eps2, g_at_center})) break;
        (val > 0.0 ? lo : hi) = lam;
        const double d = g_deriv(lam);
        double next = d < 0.0 ? lam - val / d : lo;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        lam = next;
    }

    Vector s(gamma.size());
    double value = 0.0;
    for (Eigen::Index i = 0; i < gamma.size(); ++i) {
        const double denom = 1.0 + lam * gamma(i);
        s(i) = c(i) / denom;
        const double step = lam * gamma(i) / denom;
        value += c(i) * c(i) * step * step;
    }
    r.h_star = l * (ed.vectors * s);
    r.min_value = value;
    r.lambda_star = lam;

    // stationarity Q^-1(h - mu0) + lambda N h = 0 and complementarity
    const Vector grad = l.transpose().triangularView<Eigen::Upper>().solve(
                            Vector(ed.vectors * (s - c))) +
                        lam * (n_constraint * r.h_star);
    const double scale = std::max(1.0, mu0.norm());
    r.kkt_residual = std::max(grad.norm() / scale,
                              std::abs(lam * (r.h_star.dot(n_constraint * r.h_star) - eps2)) /
                                  std::max(1.0, eps2));
    return r;
}

/** Minimize h' N h subject to (h - mu)' S^-1 (h - mu) <= radius2 (S PD).
 *
 *  Same diagonalization with S = LL', A = L'NL: the objective gradient
 *  component along null(A) vanishes identically, so the interior candidate
 *  either fits inside the ellipsoid or the multiplier solves
 *  sum d_i^2/(gamma_i + nu)^2 = radius2. */
inline QcqpResult min_quad_over_ellipsoid(const Matrix& n_objective, const Vector& mu,
                                          const Matrix& s_shape, double radius2) {
    require_symmetric(n_objective, "min_quad_over_ellipsoid");
    if (!(radius2 > 0.0))
        throw NumericalFailure("min_quad_over_ellipsoid: radius must be positive");

    const Matrix l = cholesky(s_shape);
    const Matrix a = symmetrize(l.transpose() * n_objective * l);
    const EigenDecomp ed = sym_eigen(a);
    const Vector gamma = ed.values.cwiseMax(0.0);
    const Vector d = ed.vectors.transpose() * (l.transpose() * (n_objective * mu));
    const double f_center = mu.dot(n_objective * mu);
    const double gmax = gamma.maxCoeff();

    QcqpResult r;

    // interior candidate u_i = -d_i / gamma_i over the nonzero spectrum
    double norm2 = 0.0, drop = 0.0;
    for (Eigen::Index i = 0; i < gamma.size(); ++i) {
        if (gamma(i) > kRankCutoff * std::max(gmax, 1e-300)) {
            norm2 += d(i) * d(i) / (gamma(i) * gamma(i));
            drop += d(i) * d(i) / gamma(i);
        }
    }
    if (norm2 <= radius2) {
        Vector u = Vector::Zero(gamma.size());
        for (Eigen::Index i = 0; i < gamma.size(); ++i)
            if (gamma(i) > kRankCutoff * std::max(gmax, 1e-300)) u(i) = -d(i) / gamma(i);
        r.h_star = mu + l * (ed.vectors * u);
        r.min_value = std::max(0.0, f_center - drop);
        r.lambda_star = 0.0;
        r.kkt_residual = 0.0;
        return r;
    }

    auto phi = [&](double nu) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < gamma.size(); ++i) {
            const double denom = gamma(i) + nu;
            s += d(i) * d(i) / (denom * denom);
        }
        return s;
    };
    auto phi_deriv = [&](double nu) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < gamma.size(); ++i) {
            const double denom = gamma(i) + nu;
            s += -2.0 * d(i) * d(i) / (denom * denom * denom);
        }
        return s;
    };

    double lo = 0.0, hi = std::max(1.0, gmax);
    int doublings = 0;
    while (phi(hi) > radius2) {
        lo = hi;
        hi *= 2.0;
        if (++doublings > 400)
            throw NumericalFailure("min_quad_over_ellipsoid: cannot bracket the multiplier");
    }
    double nu = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double val = phi(nu) - radius2;
        if (std::abs(val) <= 1e-13 * std::max(1.0, radius2)) break;
        (val > 0.0 ? lo : hi) = nu;
        const double pd = phi_deriv(nu);
        double next = pd < 0.0 ? nu - val / pd : lo;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        nu = next;
    }

    Vector u(gamma.size());
    double value = f_center;
    for (Eigen::Index i = 0; i < gamma.size(); ++i) {
        u(i) = -d(i) / (gamma(i) + nu);
        value += 2.0 * d(i) * u(i) + gamma(i) * u(i) * u(i);
    }
    r.h_star = mu + l * (ed.vectors * u);
    r.min_value = std::max(0.0, value);
    r.lambda_star = nu;

    const Vector w = r.h_star - mu;
    const Vector grad = n_objective * r.h_star +
                        nu * l.transpose().triangularView<Eigen::Upper>().solve(
                                 Vector(l.triangularView<Eigen::Lower>().solve(w)));
    const double scale = std::max(1.0, (n_objective * mu).norm());
    r.kkt_residual = std::max(grad.norm() / scale,
                              std::abs(nu * (phi(nu) - radius2)) / std::max(1.0, radius2));
    return r;
}

struct SConditionResult {
    bool exists_s = false;
    std::optional<double> s_star;
    double min_value = 0.0;  // infimum of the scalar over the grid
};

/** Literal diagnostic evaluation of the published scalar condition
 *
 *      phi(s) = 1 - center' [ ellA/(1-s) + ellB/s ] center,  s in (0,1):
 *
 *  dense grid (default 1e4 points) plus golden-section refinement around the
 *  best point; exists_s reports whether phi < 0 somewhere. The bracketed sum
 *  is applied to the center as printed (no outer inverse); callers pass
 *  ellA = eps^2 pinv(N) and ellB as the scaled covariance. Diagnostic only:
 *  the QCQP geometry is the authoritative decision. */
inline SConditionResult s_condition(const Vector& center, const Matrix& ell_a,
                                    const Matrix& ell_b, int grid_size = 10000) {
    require_symmetric(ell_a, "s_condition");
    require_symmetric(ell_b, "s_condition");
    const double a = center.dot(ell_a * center);
    const double b = center.dot(ell_b * center);
    auto phi = [&](double s) { return 1.0 - a / (1.0 - s) - b / s; };

    SConditionResult out;
    double best_s = 0.5, best = phi(0.5);
    for (int i = 1; i <= grid_size; ++i) {
        const double s = static_cast<double>(i) / (grid_size + 1.0);
        const double v = phi(s);
        if (v < best) {
            best = v;
            best_s = s;
        }
    }
    const double step = 1.0 / (grid_size + 1.0);
    double lo = std::max(1e-16, best_s - step), hi = std::min(1.0 - 1e-16, best_s + step);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = phi(x1), f2 = phi(x2);
    for (int it = 0; it < 100; ++it) {
        if (f1 < f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = phi(x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = phi(x2);
        }
    }
    const double refined_s = f1 < f2 ? x1 : x2;
    const double refined = std::min(f1, f2);
    if (refined < best) {
        best = refined;
        best_s = refined_s;
    }
    out.min_value = best;
    out.exists_s = best < 0.0;
    if (out.exists_s) out.s_star = best_s;
    return out;
}

namespace detail {

inline void finish_outcome(FbstOutcome& o) {
    o.e_value = clamp_e_value(o.e_value);
    o.reject = o.e_value <= o.alpha;
}

}  // namespace detail

/** Precise-hypothesis test over a finite covariate domain: GLS projection of
 *  the posterior mean onto the basis span under the posterior metric; the
 *  statistic is chi-square with |grid| degrees of freedom under the
 *  posterior. */
inline FbstOutcome test_linear_finite(const GpPosterior& post, const LinearBasis& b,
                                      double alpha = 0.05) {
    const Eigen::Index m = post.grid.rows();
    if (m < b.k) throw RankDeficient("test_linear_finite: fewer grid points than basis functions");

    const Matrix bm = design_matrix(b, post.grid);
    const JitteredFactor f = cholesky_jittered(post.cov);
    const Matrix bt = f.l.triangularView<Eigen::Lower>().solve(bm);
    const Vector mt = f.l.triangularView<Eigen::Lower>().solve(post.mean);

    Vector beta;
    try {
        beta = solve_spd(symmetrize(bt.transpose() * bt), Vector(bt.transpose() * mt));
    } catch (const NotPositiveDefinite&) {
        throw RankDeficient("test_linear_finite: design matrix is rank-deficient");
    }

    FbstOutcome o;
    o.method = FbstMethod::Thm1Finite;
    o.alpha = alpha;
    o.statistic = (bt * beta - mt).squaredNorm();
    o.threshold = chi2_quantile(static_cast<double>(m), 1.0 - alpha);
    o.e_value = 1.0 - chi2_cdf(static_cast<double>(m), o.statistic);
    detail::finish_outcome(o);
    return o;
}

/** Precise-hypothesis test on the observed design (infinite domain): the
 *  statistic is the weighted least-squares residual of the group means on
 *  the collapsed scale, compared against the posterior law of the weighted
 *  residual sum of squares. */
inline FbstOutcome test_linear_infinite(const CollapsedData& data, const PointMatrix& x_obs,
                                        const Vector& y_obs, const LinearBasis& b,
                                        const GpPosterior& post_on_xstar,
                                        double alpha = 0.05) {
    if (post_on_xstar.grid != data.unique_rows)
        throw NumericalError("test_linear_infinite: posterior grid must be the unique rows");
    if (x_obs.rows() != y_obs.size())
        throw NumericalError("test_linear_infinite: x and y sizes disagree");
    {
        const CollapsedData check = collapse(x_obs, y_obs);
        if (check.unique_rows != data.unique_rows ||
            (check.group_means - data.group_means).cwiseAbs().maxCoeff() > 1e-12)
            throw NumericalError("test_linear_infinite: collapsed data does not match raw data");
    }

    const Matrix bm = design_matrix(b, data.unique_rows);
    const Vector& counts = data.counts;
    Vector beta;
    try {
        beta = solve_spd(symmetrize(bm.transpose() * counts.asDiagonal() * bm),
                         Vector(bm.transpose() * counts.asDiagonal() * data.group_means));
    } catch (const NotPositiveDefinite&) {
        throw RankDeficient("test_linear_infinite: design matrix is rank-deficient on the unique rows");
    }

    FbstOutcome o;
    o.method = FbstMethod::Thm1Infinite;
    o.alpha = alpha;
    o.statistic = wrss(bm * beta, data);

    const QuadFormDist law = quadform_law(post_on_xstar, data);
    o.threshold = quantile(law, 1.0 - alpha);
    o.e_value = 1.0 - cdf(law, o.statistic);
    detail::finish_outcome(o);
    return o;
}

/** Pragmatic test over a finite domain: the hypothesis is enlarged to all h
 *  within weighted L2 distance epsilon of the basis span. Decision: does the
 *  HPD ellipsoid reach the enlarged set; e-value: posterior survival at the
 *  tangency level. */
inline FbstOutcome test_pragmatic_finite(const GpPosterior& post, const PragmaticSpec& spec,
                                         double alpha = 0.05) {
    if (!(spec.epsilon > 0.0))
        throw NumericalError("test_pragmatic_finite: epsilon must be positive");
    if (!check_support(spec.measure, post.grid))
        throw NumericalError("test_pragmatic_finite: measure must support the whole grid");

    const Eigen::Index m = post.grid.rows();
    const double eps2 = spec.epsilon * spec.epsilon;
    const double q = chi2_quantile(static_cast<double>(m), 1.0 - alpha);
    const Matrix n = projection_n(spec.basis, post.grid, spec.measure).matrix;

    const Matrix sigma = [&] {
        const JitteredFactor f = cholesky_jittered(post.cov);
        Matrix s = post.cov;
        if (f.jitter > 0.0) s.diagonal().array() += f.jitter;
        return s;
    }();

    // e-value: smallest HPD level at which the HPD touches the enlarged set
    const QcqpResult tangency = qcqp_min(post.mean, sigma, n, eps2);
    // decision: closest approach of the alpha-level HPD to the basis span
    const QcqpResult reach = min_quad_over_ellipsoid(n, post.mean, sigma, q);

    FbstOutcome o;
    o.method = FbstMethod::Thm2Finite;
    o.alpha = alpha;
    o.statistic = tangency.min_value;
    o.threshold = q;
    o.e_value = 1.0 - chi2_cdf(static_cast<double>(m), tangency.min_value);
    o.lambda_star = tangency.lambda_star;

    const SConditionResult sc =
        s_condition(post.mean, eps2 * pinv(n), q * sigma);
    o.s_exists = sc.exists_s;
    o.s_star = sc.s_star;
    detail::finish_outcome(o);

    const bool geometric_not_reject = reach.min_value <= eps2;
    if (geometric_not_reject == o.reject) {
        std::ostringstream msg;
        msg << "thm2-finite: geometric reach " << reach.min_value
            << " vs eps^2 " << eps2 << " disagrees with e-value decision";
        warn(msg.str());
        o.notes += "geometric/e-value disagreement; ";
    }
    if (sc.exists_s == !o.reject)
        o.notes += "literal s-condition disagrees with QCQP decision; ";
    return o;
}

/** Pragmatic test on the observed design: same construction on the collapsed
 *  WRSS scale, with the enlargement measured by the supplied (typically
 *  DP-predictive) atom weights. */
inline FbstOutcome test_pragmatic_infinite(const CollapsedData& data,
                                           const GpPosterior& post_on_xstar,
                                           const PragmaticSpec& spec, double alpha = 0.05) {
    if (!(spec.epsilon > 0.0))
        throw NumericalError("test_pragmatic_infinite: epsilon must be positive");
    if (post_on_xstar.grid != data.unique_rows)
        throw NumericalError("test_pragmatic_infinite: posterior grid must be the unique rows");
    if (!check_support(spec.measure, data.unique_rows))
        throw NumericalError("test_pragmatic_infinite: measure must support all unique rows");

    const double eps2 = spec.epsilon * spec.epsilon;
    const Matrix n = projection_n(spec.basis, data.unique_rows, spec.measure).matrix;
    const QuadFormDist law = quadform_law(post_on_xstar, data);
    const double c_alpha = quantile(law, 1.0 - alpha);

    const Matrix d_inv = Matrix(data.counts.cwiseInverse().asDiagonal());

    const QcqpResult tangency = qcqp_min(data.group_means, d_inv, n, eps2);
    const QcqpResult reach = min_quad_over_ellipsoid(n, data.group_means, d_inv, c_alpha);

    FbstOutcome o;
    o.method = FbstMethod::Thm2Infinite;
    o.alpha = alpha;
    o.statistic = tangency.min_value;
    o.threshold = c_alpha;
    o.e_value = 1.0 - cdf(law, tangency.min_value);
    o.lambda_star = tangency.lambda_star;

    const SConditionResult sc = s_condition(data.group_means, eps2 * pinv(n),
                                            c_alpha * Matrix(data.counts.asDiagonal()));
    o.s_exists = sc.exists_s;
    o.s_star = sc.s_star;
    detail::finish_outcome(o);

    const bool geometric_not_reject = reach.min_value <= eps2;
    if (geometric_not_reject == o.reject) {
        std::ostringstream msg;
        msg << "thm2-infinite: geometric reach " << reach.min_value
            << " vs eps^2 " << eps2 << " disagrees with e-value decision";
        warn(msg.str());
        o.notes += "geometric/e-value disagreement; ";
    }
    if (sc.exists_s == !o.reject)
        o.notes += "literal s-condition disagrees with QCQP decision; ";
    return o;
}

}  // namespace gpfbst

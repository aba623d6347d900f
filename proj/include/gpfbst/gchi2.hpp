// Law of a Gaussian quadratic form: weighted sum of independent noncentral
// one-degree chi-squares plus a deterministic offset,
//
//     Q = c + sum_i lambda_i * chi2_1(delta_i^2),   lambda_i > 0.
//
// quadform_law() derives the law of the weighted residual sum of squares of a
// GP posterior about the group means; cdf() inverts the characteristic
// function (Imhof's formula) with Chernoff bounds clamping the far tails and
// an exact normal-CDF expression when only one weight survives; quantile()
// bisects the cdf; cdf_mc() is the Monte Carlo check.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gpfbst/errors.hpp"
#include "gpfbst/gp.hpp"
#include "gpfbst/numerics.hpp"
#include "gpfbst/rng.hpp"
#include "gpfbst/special.hpp"

namespace gpfbst {

struct QuadFormDist {
    Vector weights;          // positive weights, descending
    Vector noncentralities;  // delta_i^2 aligned with weights
    double constant = 0.0;   // deterministic offset from zero-variance directions

    double mean() const {
        return constant +
               (weights.array() * (1.0 + noncentralities.array())).sum();
    }
    double variance() const {
        return (2.0 * weights.array().square() * (1.0 + 2.0 * noncentralities.array()))
            .sum();
    }
};

/** Law of wrss(g) = (g - ybar)' D (g - ybar) for g drawn from the posterior.
 *
 *  With Z = D^{1/2}(g - ybar) ~ N(D^{1/2} m, A), A = D^{1/2} Sigma D^{1/2},
 *  m = mu - ybar, the spectral decomposition A = V diag(lambda) V' gives
 *  wrss = sum_i lambda_i chi2_1(delta_i^2), delta_i^2 = (v_i' D^{1/2} m)^2 /
 *  lambda_i. Eigenvalues below 1e-10 * lambda_max carry (v_i' D^{1/2} m)^2
 *  into the deterministic constant; eigenvalues below -1e-9 * lambda_max are
 *  a hard error. Requires post.grid == collapsed.unique_rows, same order. */
inline QuadFormDist quadform_law(const GpPosterior& post, const CollapsedData& c) {
    if (post.grid.rows() != c.unique_rows.rows() || post.grid.cols() != c.unique_rows.cols() ||
        post.grid != c.unique_rows)
        throw NumericalError("quadform_law: posterior grid and unique rows disagree");

    const Vector dsqrt = c.counts.cwiseSqrt();
    const Matrix a = symmetrize(dsqrt.asDiagonal() * post.cov * dsqrt.asDiagonal());
    const EigenDecomp ed = sym_eigen(a);
    const Vector b = dsqrt.asDiagonal() * (post.mean - c.group_means);

    const double lmax = std::max(0.0, ed.values(0));
    if (ed.values(ed.values.size() - 1) < -1e-9 * std::max(lmax, 1e-300))
        throw NumericalError("quadform_law: covariance is significantly indefinite");

    std::vector<double> w, nc;
    double constant = 0.0;
    for (Eigen::Index i = 0; i < ed.values.size(); ++i) {
        const double lam = ed.values(i);
        const double shift = ed.vectors.col(i).dot(b);
        if (lam > kRankCutoff * lmax && lam > 0.0) {
            w.push_back(lam);
            nc.push_back(shift * shift / lam);
        } else {
            constant += shift * shift;
        }
    }
    QuadFormDist d;
    d.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    d.noncentralities =
        Eigen::Map<const Vector>(nc.data(), static_cast<Eigen::Index>(nc.size()));
    d.constant = constant;
    return d;
}

namespace detail {

// log moment generating function of the pure part sum lambda chi2_1(delta^2),
// valid for s < 1/(2 lambda_max).
inline double qf_log_mgf(const QuadFormDist& d, double s) {
    double out = 0.0;
    for (Eigen::Index i = 0; i < d.weights.size(); ++i) {
        const double r = 1.0 - 2.0 * s * d.weights(i);
        out += -0.5 * std::log(r) + s * d.weights(i) * d.noncentralities(i) / r;
    }
    return out;
}

inline double qf_log_mgf_deriv(const QuadFormDist& d, double s) {
    double out = 0.0;
    for (Eigen::Index i = 0; i < d.weights.size(); ++i) {
        const double r = 1.0 - 2.0 * s * d.weights(i);
        out += d.weights(i) / r + d.weights(i) * d.noncentralities(i) / (r * r);
    }
    return out;
}

// Chernoff bound on P(pure >= t), t above the pure mean; 1.0 when no bound.
inline double chernoff_upper(const QuadFormDist& d, double t) {
    const double mean0 = d.mean() - d.constant;
    if (!(t > mean0)) return 1.0;
    const double smax = 1.0 / (2.0 * d.weights.maxCoeff());
    double lo = 0.0, hi = smax * (1.0 - 1e-12);
    if (qf_log_mgf_deriv(d, hi) < t) {  // saddle essentially at the pole
        lo = hi;
    } else {
        for (int it = 0; it < 200 && hi - lo > 1e-15 * smax; ++it) {
            const double mid = 0.5 * (lo + hi);
            (qf_log_mgf_deriv(d, mid) < t ? lo : hi) = mid;
        }
    }
    const double s = lo;
    return std::exp(std::min(700.0, qf_log_mgf(d, s) - s * t));
}

// Chernoff bound on P(pure <= t), t below the pure mean; 1.0 when no bound.
inline double chernoff_lower(const QuadFormDist& d, double t) {
    const double mean0 = d.mean() - d.constant;
    if (!(t < mean0) || t <= 0.0) return t <= 0.0 ? 0.0 : 1.0;
    double lo = -1.0;
    while (qf_log_mgf_deriv(d, lo) > t) {
        lo *= 2.0;
        if (lo < -1e18) break;
    }
    double hi = 0.0;
    for (int it = 0; it < 300 && hi - lo > 1e-12 * std::max(1.0, -lo); ++it) {
        const double mid = 0.5 * (lo + hi);
        (qf_log_mgf_deriv(d, mid) > t ? hi : lo) = mid;
    }
    const double s = hi;
    return std::exp(std::min(700.0, qf_log_mgf(d, s) - s * t));
}

struct ImhofIntegrand {
    const Vector& lam;
    const Vector& nc;
    double t;

    // phase and log amplitude of the characteristic-function integrand
    double theta(double u) const {
        double s = -0.5 * t * u;
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
            const double lu = lam(i) * u;
            s += 0.5 * std::atan(lu) + 0.5 * nc(i) * lu / (1.0 + lu * lu);
        }
        return s;
    }
    double log_rho(double u) const {
        double s = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
            const double l2u2 = lam(i) * lam(i) * u * u;
            s += 0.25 * std::log1p(l2u2) + 0.5 * nc(i) * l2u2 / (1.0 + l2u2);
        }
        return s;
    }
    double operator()(double u) const {
        if (u < 1e-300) {  // limit of sin(theta)/(u rho) at the origin
            double slope = -0.5 * t;
            for (Eigen::Index i = 0; i < lam.size(); ++i)
                slope += 0.5 * lam(i) * (1.0 + nc(i));
            return slope;
        }
        const double lr = log_rho(u);
        if (lr > 700.0) return 0.0;
        return std::sin(theta(u)) * std::exp(-lr) / u;
    }
    // envelope of |theta'(u)| away from the -t u / 2 term
    double phase_rate_extra(double u) const {
        double s = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
            const double l2u2 = lam(i) * lam(i) * u * u;
            s += 0.5 * lam(i) * (1.0 + nc(i)) / (1.0 + l2u2);
        }
        return s;
    }
};

inline double adaptive_simpson(const ImhofIntegrand& f, double a, double fa, double b,
                               double fb, double fm, double whole, double tol,
                               int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1);
}

/** CDF of the pure part at t by numerically inverting the characteristic
 *  function:  F(t) = 1/2 - (1/pi) int_0^inf sin(theta(u)) / (u rho(u)) du.
 *
 *  The truncation point takes whichever bound bites first: absolute
 *  convergence of the u^{-1-k/2} envelope, or the integration-by-parts bound
 *  ~ 16 w(U) / (pi t) once the phase is dominated by its -t u/2 term. Panels
 *  track both the local phase rate and a geometric growth cap, each refined
 *  by adaptive Simpson. */
inline double imhof_cdf(const QuadFormDist& d, double t) {
    // normalize the scale so lambda_max = 1
    const double scale = d.weights.maxCoeff();
    Vector lam = d.weights / scale;
    const double tt = t / scale;
    ImhofIntegrand f{lam, d.noncentralities, tt};

    const double eps_tail = 2e-7 * M_PI;

    auto log_w = [&](double u) { return -std::log(u) - f.log_rho(u); };
    // -d log w / d log u - 1 at u; nondecreasing in u, so for p(U) > 0 the
    // tail mass is at most w(U) U / p(U)
    auto decay_margin = [&](double u) {
        double p = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
            const double l2u2 = lam(i) * lam(i) * u * u;
            p += 0.5 * l2u2 / (1.0 + l2u2);
        }
        return p;
    };
    double u_abs = 2.0, u_osc = 2.0;
    bool abs_ok = false, osc_ok = false;
    for (int i = 0; i < 60 && !abs_ok; ++i) {
        const double p = decay_margin(u_abs);
        if (p > 0.05 && std::exp(log_w(u_abs)) * u_abs / p <= eps_tail)
            abs_ok = true;
        else
            u_abs *= 2.0;
    }
    for (int i = 0; i < 60 && !osc_ok; ++i) {
        if (tt > 0.0 && f.phase_rate_extra(u_osc) <= 0.125 * tt &&
            16.0 * std::exp(log_w(u_osc)) / tt <= eps_tail)
            osc_ok = true;
        else
            u_osc *= 2.0;
    }
    if (!abs_ok && !osc_ok)
        throw IntegrationFailure("imhof_cdf: no usable truncation point");
    double cut = abs_ok ? u_abs : u_osc;
    if (abs_ok && osc_ok) cut = std::min(u_abs, u_osc);

    // walk panels, each at most a quarter phase turn or a geometric step
    const double tol_per_unit = 3e-7 * M_PI / cut;
    double total = 0.0;
    double u = 0.0, fu = f(0.0);
    while (u < cut) {
        const double rate = 0.5 * tt + f.phase_rate_extra(u);
        double step = std::min(0.25 * M_PI / std::max(rate, 1e-300),
                               std::max(0.5, 0.5 * u));
        double v = std::min(u + step, cut);
        const double fv = f(v);
        const double fm = f(0.5 * (u + v));
        const double whole = (v - u) / 6.0 * (fu + 4.0 * fm + fv);
        total += adaptive_simpson(f, u, fu, v, fv, fm, whole,
                                  tol_per_unit * (v - u), 24);
        u = v;
        fu = fv;
    }
    return std::clamp(0.5 - total / M_PI, 0.0, 1.0);
}

}  // namespace detail

/** P(Q <= x), absolute error target 1e-6.
 *
 *  Dispatch: degenerate point mass directly; one surviving weight via the
 *  exact normal-CDF identity; otherwise Imhof inversion, with Chernoff
 *  saddlepoint bounds certifying far-tail clamps to 0 or 1 (mass below
 *  1e-13). */
inline double cdf(const QuadFormDist& d, double x) {
    const double t = x - d.constant;
    if (d.weights.size() == 0) return t >= 0.0 ? 1.0 : 0.0;
    if (t <= 0.0) return 0.0;

    if (d.weights.size() == 1) {
        const double r = std::sqrt(t / d.weights(0));
        const double delta = std::sqrt(d.noncentralities(0));
        return std::clamp(normal_cdf(r - delta) - normal_cdf(-r - delta), 0.0, 1.0);
    }

    const double mean0 = d.mean() - d.constant;
    if (t > mean0 && detail::chernoff_upper(d, t) < 1e-13) return 1.0;
    if (t < mean0 && detail::chernoff_lower(d, t) < 1e-13) return 0.0;
    return detail::imhof_cdf(d, t);
}

/** Smallest x with cdf(x) = p, bisected until the cdf matches p to 2e-6 or
 *  the bracket collapses. Bracket [0, mean + 12 sd], widened if needed. */
inline double quantile(const QuadFormDist& d, double p) {
    if (!(p > 0.0 && p < 1.0))
        throw NumericalError("quantile: p must lie in (0, 1)");
    if (d.weights.size() == 0) return d.constant;
    double hi = d.mean() + 12.0 * std::sqrt(d.variance());
    for (int i = 0; i < 200 && cdf(d, hi) < p; ++i) hi *= 2.0;
    return find_root([&](double x) { return cdf(d, x) - p; }, 0.0, hi, 2e-6);
}

/** Monte Carlo estimate of P(Q <= x) from `samples` draws; the standard
 *  error is sqrt(p(1-p)/samples). */
inline double cdf_mc(const QuadFormDist& d, double x, int samples, std::uint64_t seed) {
    if (samples <= 0) throw NumericalError("cdf_mc: samples must be positive");
    NormalSampler z(seed);
    const Vector delta = d.noncentralities.cwiseSqrt();
    long hits = 0;
    for (int s = 0; s < samples; ++s) {
        double q = d.constant;
        for (Eigen::Index i = 0; i < d.weights.size(); ++i) {
            const double g = z() + delta(i);
            q += d.weights(i) * g * g;
        }
        if (q <= x) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples);
}

}  // namespace gpfbst

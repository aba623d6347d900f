// Unit tests for the hypothesis machinery and the four adequacy tests:
// projection matrices, the weighted-projection distance identity, the two
// constrained quadratic minimizers, and the precise/pragmatic outcomes.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gpfbst/fbst.hpp"

using namespace gpfbst;
using Catch::Approx;

namespace {

PointMatrix grid_1d(std::initializer_list<double> vals) {
    Vector t(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double v : vals) t(i++) = v;
    return points_1d(t);
}

PointMatrix droplet_times() {
    Vector t(15);
    for (int i = 0; i < 15; ++i) t(i) = 0.5 * (i + 1);
    return points_1d(t);
}

// Silence warn() for tests that deliberately trip diagnostics.
struct WarnCapture {
    std::vector<std::string> messages;
    std::function<void(const std::string&)> saved;
    WarnCapture() : saved(warn_handler()) {
        warn_handler() = [this](const std::string& m) { messages.push_back(m); };
    }
    ~WarnCapture() { warn_handler() = saved; }
};

}  // namespace

TEST_CASE("projection_m annihilates the basis span", "[hypothesis]") {
    // intercept-only on {0,1}: M = I - 11'/2 = [[.5,-.5],[-.5,.5]]
    const ProjectionPair p = projection_m(intercept_only(), grid_1d({0.0, 1.0}));
    Matrix expect(2, 2);
    expect << 0.5, -0.5, -0.5, 0.5;
    CHECK((p.matrix - expect).cwiseAbs().maxCoeff() < 1e-12);

    SECTION("idempotent with eigenvalues in {0,1}") {
        const Matrix& m = p.matrix;
        CHECK((m * m - m).cwiseAbs().maxCoeff() < 1e-12);
        const EigenDecomp d = sym_eigen(m);
        for (Eigen::Index i = 0; i < d.values.size(); ++i) {
            const double lam = d.values(i);
            CHECK((std::abs(lam) < 1e-10 || std::abs(lam - 1.0) < 1e-10));
        }
    }
    SECTION("trace is n - k on the droplet design") {
        const ProjectionPair m2 = projection_m(intercept_slope(), droplet_times());
        CHECK(m2.matrix.trace() == Approx(13.0).epsilon(1e-10));
    }
    SECTION("rank-deficient design throws") {
        CHECK_THROWS_AS(projection_m(intercept_slope(), grid_1d({3.0, 3.0})), RankDeficient);
    }
}

TEST_CASE("projection_n weighted distance oracle", "[hypothesis]") {
    // intercept-only, points {0,1}, weights (1/2,1/2):
    // N = D - D11'D = [[.25,-.25],[-.25,.25]]; h = (0,2) gives h'Nh = 1,
    // matching the weighted variance of h: .5*(0-1)^2 + .5*(2-1)^2 = 1
    const PointMatrix pts = grid_1d({0.0, 1.0});
    const CovariateMeasure w = finite_uniform(pts);
    const ProjectionPair p = projection_n(intercept_only(), pts, w);
    Matrix expect(2, 2);
    expect << 0.25, -0.25, -0.25, 0.25;
    CHECK((p.matrix - expect).cwiseAbs().maxCoeff() < 1e-12);

    Vector h(2);
    h << 0.0, 2.0;
    CHECK(h.dot(p.matrix * h) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("projection_n warns on unweighted points and zeroes them", "[hypothesis]") {
    WarnCapture capture;
    const CovariateMeasure w = finite_uniform(grid_1d({0.0, 1.0}));
    const ProjectionPair p = projection_n(intercept_only(), grid_1d({0.0, 1.0, 2.0}), w);
    CHECK(capture.messages.size() == 1);
    CHECK(p.matrix.row(2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.matrix.col(2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("weighted_l2_project hand oracle and h'Nh identity", "[hypothesis]") {
    // intercept-only, atoms {0,1,2} uniform, h = (0,1,5):
    // beta = mean(h) = 2, distance^2 = ((0-2)^2 + (1-2)^2 + (5-2)^2)/3 = 14/3
    const PointMatrix atoms = grid_1d({0.0, 1.0, 2.0});
    const CovariateMeasure w = finite_uniform(atoms);
    Vector h(3);
    h << 0.0, 1.0, 5.0;
    const WeightedL2Projection proj = weighted_l2_project(h, intercept_only(), w);
    CHECK(proj.beta_tilde(0) == Approx(2.0).epsilon(1e-12));
    CHECK(proj.distance * proj.distance == Approx(14.0 / 3.0).epsilon(1e-12));

    SECTION("distance^2 equals h'Nh for random h on the droplet grid") {
        const PointMatrix pts = droplet_times();
        const CovariateMeasure u = finite_uniform(pts);
        const ProjectionPair n1 = projection_n(intercept_only(), pts, u);
        const ProjectionPair n2 = projection_n(intercept_slope(), pts, u);
        std::mt19937_64 gen(3);
        std::normal_distribution<double> normal;
        for (int rep = 0; rep < 20; ++rep) {
            Vector g(15);
            for (int i = 0; i < 15; ++i) g(i) = 5.0 + normal(gen);
            const double d1 = weighted_l2_project(g, intercept_only(), u).distance;
            const double d2 = weighted_l2_project(g, intercept_slope(), u).distance;
            CHECK(d1 * d1 == Approx(g.dot(n1.matrix * g)).margin(1e-10));
            CHECK(d2 * d2 == Approx(g.dot(n2.matrix * g)).margin(1e-10));
        }
    }
    SECTION("length mismatch throws") {
        Vector bad(2);
        bad << 0.0, 1.0;
        CHECK_THROWS_AS(weighted_l2_project(bad, intercept_only(), w), NumericalError);
    }
}

TEST_CASE("tabulated basis spans reparameterize invariantly", "[hypothesis]") {
    // columns (1, 3 - 2t) span the same space as (1, t); weighted projection
    // distances must agree
    const PointMatrix pts = grid_1d({0.0, 0.5, 1.0, 1.5, 2.0});
    Matrix cols(5, 2);
    for (int i = 0; i < 5; ++i) {
        const double t = 0.5 * i;
        cols(i, 0) = 1.0;
        cols(i, 1) = 3.0 - 2.0 * t;
    }
    const LinearBasis repar = tabulated_basis(pts, cols, "reparameterized");
    const CovariateMeasure w = finite_uniform(pts);
    Vector h(5);
    h << 1.0, 0.2, -0.5, 2.0, 0.7;
    const double d_std = weighted_l2_project(h, intercept_slope(), w).distance;
    const double d_rep = weighted_l2_project(h, repar, w).distance;
    CHECK(d_std == Approx(d_rep).margin(1e-10));

    CHECK_THROWS_AS(design_matrix(repar, grid_1d({9.0})), NumericalError);
}

TEST_CASE("qcqp_min one-dimensional oracle", "[qcqp]") {
    // minimize (h-3)^2 subject to h^2 <= 1: h* = 1, value 4; stationarity
    // (h - 3) + lambda h = 0 gives lambda = 2
    Vector mu0(1);
    mu0 << 3.0;
    const Matrix one = Matrix::Identity(1, 1);
    const QcqpResult r = qcqp_min(mu0, one, one, 1.0);
    CHECK(r.min_value == Approx(4.0).epsilon(1e-9));
    CHECK(r.h_star(0) == Approx(1.0).epsilon(1e-9));
    CHECK(r.lambda_star == Approx(2.0).epsilon(1e-7));
    CHECK(r.kkt_residual < 1e-10);

    SECTION("center already feasible") {
        const QcqpResult inside = qcqp_min(mu0, one, one, 10.0);
        CHECK(inside.min_value == 0.0);
        CHECK(inside.h_star(0) == 3.0);
        CHECK(inside.lambda_star == 0.0);
    }
    SECTION("negative bound throws") {
        CHECK_THROWS_AS(qcqp_min(mu0, one, one, -1.0), NumericalError);
    }
}

TEST_CASE("qcqp_min KKT residuals on random instances", "[qcqp]") {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 2 + rep % 4;
        Matrix a(n, n), c(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                a(i, j) = normal(gen);
                c(i, j) = normal(gen);
            }
        const Matrix q = symmetrize(a * a.transpose()) + 0.1 * Matrix::Identity(n, n);
        const Matrix nc = symmetrize(c * c.transpose());
        Vector mu0(n);
        for (int i = 0; i < n; ++i) mu0(i) = 2.0 * normal(gen);
        const double g0 = mu0.dot(nc * mu0);
        const QcqpResult r = qcqp_min(mu0, q, nc, 0.3 * g0);
        CHECK(r.kkt_residual < 1e-8);
        CHECK(r.h_star.dot(nc * r.h_star) == Approx(0.3 * g0).epsilon(1e-6));
    }
}

TEST_CASE("min_quad_over_ellipsoid one-dimensional oracle", "[qcqp]") {
    // minimize h^2 subject to (h-3)^2 <= 1: h* = 2, value 4
    Vector mu(1);
    mu << 3.0;
    const Matrix one = Matrix::Identity(1, 1);
    const QcqpResult r = min_quad_over_ellipsoid(one, mu, one, 1.0);
    CHECK(r.min_value == Approx(4.0).epsilon(1e-9));
    CHECK(r.h_star(0) == Approx(2.0).epsilon(1e-9));
    CHECK(r.kkt_residual < 1e-10);

    SECTION("unconstrained minimum inside the ellipsoid") {
        Vector close(1);
        close << 0.5;
        const QcqpResult inside = min_quad_over_ellipsoid(one, close, one, 1.0);
        CHECK(inside.min_value == Approx(0.0).margin(1e-12));
        CHECK(inside.lambda_star == 0.0);
    }
    SECTION("nonpositive radius throws") {
        CHECK_THROWS_AS(min_quad_over_ellipsoid(one, mu, one, 0.0), NumericalError);
    }
}

TEST_CASE("test_linear_finite two-point oracle", "[fbst]") {
    // posterior mean (1,2), cov = I, intercept-only: GLS beta = 1.5,
    // statistic = (1-1.5)^2 + (2-1.5)^2 = 0.5, threshold = chi2_{2,0.95},
    // e = P(chi2_2 > 0.5) = exp(-0.25)
    GpPosterior post;
    post.grid = grid_1d({0.0, 1.0});
    post.mean = Vector(2);
    post.mean << 1.0, 2.0;
    post.cov = Matrix::Identity(2, 2);

    const FbstOutcome o = test_linear_finite(post, intercept_only());
    CHECK(o.statistic == Approx(0.5).epsilon(1e-10));
    CHECK(o.threshold == Approx(5.991464547).epsilon(1e-7));
    CHECK(o.e_value == Approx(std::exp(-0.25)).epsilon(1e-10));
    CHECK_FALSE(o.reject);
    CHECK(o.reject == (o.e_value <= o.alpha));
    CHECK(o.method == FbstMethod::Thm1Finite);

    SECTION("fewer grid points than basis functions") {
        GpPosterior tiny;
        tiny.grid = grid_1d({0.0});
        tiny.mean = Vector::Ones(1);
        tiny.cov = Matrix::Identity(1, 1);
        CHECK_THROWS_AS(test_linear_finite(tiny, intercept_slope()), RankDeficient);
    }
}

TEST_CASE("test_linear_infinite on a tiny dataset", "[fbst]") {
    GpPrior prior;
    prior.mean = constant_mean(0.0);
    prior.kernel = Kernel{KernelFamily::Exponential, 1.0, 1.0};
    prior.noise_var = 0.01;

    Vector t(2), y(2);
    t << 0.0, 1.0;
    y << 0.0, 2.0;
    const PointMatrix x = points_1d(t);
    const CollapsedData data = collapse(x, y);
    const GpPosterior post = posterior(prior, x, y, data.unique_rows);

    SECTION("a basis that fits exactly leaves zero residual") {
        const FbstOutcome o = test_linear_infinite(data, x, y, intercept_slope(), post);
        CHECK(o.statistic == Approx(0.0).margin(1e-18));
        CHECK(o.e_value == 1.0);
        CHECK_FALSE(o.reject);
    }
    SECTION("intercept-only residual is the group-mean spread") {
        // WLS fit is ybar = 1; wrss = (0-1)^2 + (2-1)^2 = 2, roughly 10 noise
        // sd away from every plausible path, so the far-tail clamp fires
        const FbstOutcome o = test_linear_infinite(data, x, y, intercept_only(), post);
        CHECK(o.statistic == Approx(2.0).epsilon(1e-12));
        CHECK(o.e_value == 0.0);
        CHECK(o.reject);
    }
    SECTION("a mild departure lands strictly between the clamps") {
        Vector y_mild(2);
        y_mild << 0.0, 0.3;
        const CollapsedData mild = collapse(x, y_mild);
        const GpPosterior post_mild = posterior(prior, x, y_mild, mild.unique_rows);
        // WLS fit is ybar = 0.15; wrss = 2 * 0.15^2 = 0.045
        const FbstOutcome o =
            test_linear_infinite(mild, x, y_mild, intercept_only(), post_mild);
        CHECK(o.statistic == Approx(0.045).epsilon(1e-12));
        CHECK(o.e_value > 0.0);
        CHECK(o.e_value < 1.0);
        CHECK(o.reject == (o.e_value <= o.alpha));
    }
    SECTION("raw data disagreeing with the collapse is rejected") {
        Vector y_wrong(2);
        y_wrong << 0.0, 3.0;
        CHECK_THROWS_AS(test_linear_infinite(data, x, y_wrong, intercept_only(), post),
                        NumericalError);
    }
}

TEST_CASE("test_pragmatic_finite enlargement geometry", "[fbst]") {
    // posterior mean nearly constant: weighted variance about its mean is
    // (0 + .01 + .01)/3 = 0.0066667, so epsilon = 1 contains the mean
    // (e = 1) while epsilon = 0.01 does not (tangency > 0)
    WarnCapture capture;
    GpPosterior post;
    post.grid = grid_1d({0.0, 1.0, 2.0});
    post.mean = Vector(3);
    post.mean << 1.0, 1.1, 0.9;
    post.cov = 0.01 * Matrix::Identity(3, 3);

    PragmaticSpec spec;
    spec.basis = intercept_only();
    spec.measure = finite_uniform(post.grid);

    spec.epsilon = 1.0;
    const FbstOutcome wide = test_pragmatic_finite(post, spec);
    CHECK(wide.statistic == 0.0);
    CHECK(wide.e_value == 1.0);
    CHECK_FALSE(wide.reject);

    spec.epsilon = 0.01;
    const FbstOutcome narrow = test_pragmatic_finite(post, spec);
    CHECK(narrow.statistic > 0.0);
    CHECK(narrow.e_value < 1.0);
    CHECK(narrow.reject == (narrow.e_value <= narrow.alpha));

    SECTION("pragmatic e-value dominates the precise one") {
        const FbstOutcome precise = test_linear_finite(post, intercept_only());
        CHECK(wide.e_value >= precise.e_value);
        CHECK(narrow.e_value >= precise.e_value);
    }
    SECTION("epsilon must be positive") {
        spec.epsilon = 0.0;
        CHECK_THROWS_AS(test_pragmatic_finite(post, spec), NumericalError);
    }
    SECTION("measure must support the grid") {
        spec.epsilon = 1.0;
        spec.measure = finite_uniform(grid_1d({0.0, 1.0}));
        CHECK_THROWS_AS(test_pragmatic_finite(post, spec), NumericalError);
    }
}

TEST_CASE("test_pragmatic_infinite on a tiny dataset", "[fbst]") {
    WarnCapture capture;
    GpPrior prior;
    prior.mean = constant_mean(0.0);
    prior.kernel = Kernel{KernelFamily::Exponential, 1.0, 1.0};
    prior.noise_var = 0.01;

    Vector t(3), y(3);
    t << 0.0, 1.0, 2.0;
    y << 0.1, 1.0, 2.1;
    const PointMatrix x = points_1d(t);
    const CollapsedData data = collapse(x, y);
    const GpPosterior post = posterior(prior, x, y, data.unique_rows);

    PragmaticSpec spec;
    spec.basis = intercept_slope();
    spec.measure = dp_predictive(1.0, x);

    spec.epsilon = 2.0;
    const FbstOutcome wide = test_pragmatic_infinite(data, post, spec);
    CHECK(wide.e_value == 1.0);
    CHECK_FALSE(wide.reject);

    spec.epsilon = 1e-4;
    const FbstOutcome narrow = test_pragmatic_infinite(data, post, spec);
    CHECK(narrow.e_value >= test_linear_infinite(data, x, y, intercept_slope(), post).e_value);
    CHECK(narrow.reject == (narrow.e_value <= narrow.alpha));

    SECTION("posterior grid must match the unique rows") {
        GpPosterior off = post;
        off.grid(0, 0) += 0.5;
        CHECK_THROWS_AS(test_pragmatic_infinite(data, off, spec), NumericalError);
    }
}

TEST_CASE("dp_predictive atom weights", "[measure]") {
    SECTION("continuous base keeps tau/(tau+n) off the atoms") {
        // 15 distinct observations, tau = 1: each atom gets 1/16
        const CovariateMeasure m = dp_predictive(1.0, droplet_times());
        REQUIRE(m.atoms.rows() == 15);
        for (Eigen::Index i = 0; i < 15; ++i)
            CHECK(m.weights(i) == Approx(1.0 / 16.0).epsilon(1e-14));
        CHECK(m.continuous_mass == Approx(1.0 / 16.0).epsilon(1e-14));
        CHECK(m.total_atom_mass == Approx(15.0 / 16.0).epsilon(1e-12));
    }
    SECTION("replicated observations accumulate counts") {
        // x = (1,1,2), tau = 1: atoms (1,2) with weights (2/4, 1/4)
        Vector t(3);
        t << 1.0, 1.0, 2.0;
        const CovariateMeasure m = dp_predictive(1.0, points_1d(t));
        REQUIRE(m.atoms.rows() == 2);
        CHECK(m.weights(0) == Approx(0.5).epsilon(1e-14));
        CHECK(m.weights(1) == Approx(0.25).epsilon(1e-14));
    }
    SECTION("discrete base folds mass back onto atoms") {
        Vector t(3);
        t << 1.0, 1.0, 2.0;
        const CovariateMeasure m = dp_predictive(1.0, points_1d(t), false);
        CHECK(m.weights(0) == Approx(2.0 / 3.0).epsilon(1e-14));
        CHECK(m.weights(1) == Approx(1.0 / 3.0).epsilon(1e-14));
        CHECK(m.continuous_mass == 0.0);
        CHECK(m.total_atom_mass == Approx(1.0).epsilon(1e-14));
    }
    SECTION("negative tau throws") {
        CHECK_THROWS_AS(dp_predictive(-1.0, droplet_times()), NumericalError);
    }
}

TEST_CASE("finite_uniform measure", "[measure]") {
    const CovariateMeasure m = finite_uniform(droplet_times());
    CHECK(m.atoms.rows() == 15);
    CHECK(m.weights(0) == Approx(1.0 / 15.0).epsilon(1e-14));
    CHECK(check_support(m, droplet_times()));
    CHECK_FALSE(check_support(m, grid_1d({0.0})));

    SECTION("duplicate atoms are rejected") {
        CHECK_THROWS_AS(finite_uniform(grid_1d({1.0, 1.0})), DuplicateAtoms);
    }
}

TEST_CASE("clamp_e_value clamps certified tails only", "[fbst]") {
    CHECK(clamp_e_value(1e-13) == 0.0);
    CHECK(clamp_e_value(1.0 - 1e-13) == 1.0);
    CHECK(clamp_e_value(0.5) == 0.5);
    CHECK(clamp_e_value(1e-9) == 1e-9);
}

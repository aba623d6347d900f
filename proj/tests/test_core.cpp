// Unit tests for the dense linear-algebra layer and the special functions:
// Cholesky, pseudo-inverse, eigendecomposition, bisection root finding, and
// the incomplete-gamma/chi-square family. Expectations are hand-computed.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gpfbst/numerics.hpp"
#include "gpfbst/special.hpp"

using namespace gpfbst;
using Catch::Approx;

TEST_CASE("cholesky factors a hand-checked SPD matrix", "[numerics]") {
    // A = [[4,2],[2,3]]: L00 = 2, L10 = 2/2 = 1, L11 = sqrt(3 - 1) = sqrt(2)
    Matrix a(2, 2);
    a << 4.0, 2.0, 2.0, 3.0;
    const Matrix l = cholesky(a);
    CHECK(l(0, 0) == Approx(2.0).epsilon(1e-14));
    CHECK(l(0, 1) == 0.0);
    CHECK(l(1, 0) == Approx(1.0).epsilon(1e-14));
    CHECK(l(1, 1) == Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK((l * l.transpose() - a).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("cholesky rejects bad input", "[numerics]") {
    SECTION("indefinite matrix") {
        // [[1,2],[2,1]]: second pivot 1 - 4 = -3
        Matrix a(2, 2);
        a << 1.0, 2.0, 2.0, 1.0;
        CHECK_THROWS_AS(cholesky(a), NotPositiveDefinite);
    }
    SECTION("asymmetric matrix") {
        Matrix a(2, 2);
        a << 1.0, 0.5, 0.1, 1.0;
        CHECK_THROWS_AS(cholesky(a), NumericalError);
    }
}

TEST_CASE("solve_spd inverts against the factorization", "[numerics]") {
    Matrix a(3, 3);
    a << 4.0, 1.0, 0.5,
         1.0, 3.0, 0.2,
         0.5, 0.2, 2.0;
    Vector b(3);
    b << 1.0, -2.0, 0.5;
    const Vector x = solve_spd(a, b);
    CHECK((a * x - b).cwiseAbs().maxCoeff() < 1e-12);

    Matrix rhs(3, 2);
    rhs << 1.0, 0.0, 0.0, 1.0, 0.0, 0.0;
    const Matrix xm = solve_spd(a, rhs);
    CHECK((a * xm - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cholesky_jittered rescues a singular PSD matrix", "[numerics]") {
    // [[1,1],[1,1]] is PSD with a zero eigenvalue; a ridge must be applied
    Matrix a(2, 2);
    a << 1.0, 1.0, 1.0, 1.0;
    const JitteredFactor f = cholesky_jittered(a);
    CHECK(f.jitter > 0.0);
    Matrix target = a;
    target.diagonal().array() += f.jitter;
    CHECK((f.l * f.l.transpose() - target).cwiseAbs().maxCoeff() < 1e-12);

    SECTION("no jitter on a healthy matrix") {
        Matrix b(2, 2);
        b << 2.0, 0.3, 0.3, 1.0;
        CHECK(cholesky_jittered(b).jitter == 0.0);
    }
}

TEST_CASE("sym_eigen sorts descending and reconstructs", "[numerics]") {
    Matrix a(3, 3);
    a << 2.0, 1.0, 0.0,
         1.0, 2.0, 0.0,
         0.0, 0.0, 5.0;
    const EigenDecomp d = sym_eigen(a);
    // spectrum of the 2x2 block is {3, 1}; the full set sorted is 5, 3, 1
    CHECK(d.values(0) == Approx(5.0).epsilon(1e-12));
    CHECK(d.values(1) == Approx(3.0).epsilon(1e-12));
    CHECK(d.values(2) == Approx(1.0).epsilon(1e-12));
    const Matrix recon = d.vectors * d.values.asDiagonal() * d.vectors.transpose();
    CHECK((recon - a).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((d.vectors.transpose() * d.vectors - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("pinv of a rank-one outer product", "[numerics]") {
    // v = (1,1,1,1), A = v v' has pseudo-inverse v v' / ||v||^4 = v v' / 16
    Vector v = Vector::Ones(4);
    const Matrix a = v * v.transpose();
    const Matrix p = pinv(a);
    CHECK((p - a / 16.0).cwiseAbs().maxCoeff() < 1e-12);

    SECTION("Penrose identities") {
        CHECK((a * p * a - a).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((p * a * p - p).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("zero matrix maps to zero") {
        CHECK(pinv(Matrix::Zero(3, 3)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("find_root recovers the 0.95 normal quantile", "[numerics]") {
    const double z = find_root([](double x) { return normal_cdf(x) - 0.95; }, 0.0, 10.0);
    CHECK(z == Approx(1.6448536270).epsilon(1e-8));

    SECTION("exact root at an endpoint returns it") {
        CHECK(find_root([](double x) { return x - 2.0; }, 2.0, 5.0) == 2.0);
    }
    SECTION("missing sign change throws") {
        CHECK_THROWS_AS(find_root([](double x) { return x * x + 1.0; }, -1.0, 1.0), NoBracket);
    }
    SECTION("inverted interval throws") {
        CHECK_THROWS_AS(find_root([](double x) { return x; }, 1.0, -1.0), NoBracket);
    }
}

TEST_CASE("normal_cdf basics", "[special]") {
    CHECK(normal_cdf(0.0) == Approx(0.5).epsilon(1e-15));
    CHECK(normal_cdf(1.6448536270) == Approx(0.95).epsilon(1e-9));
    CHECK(normal_cdf(-1.6448536270) == Approx(0.05).epsilon(1e-7));
}

TEST_CASE("gamma_p against closed forms", "[special]") {
    // P(1/2, x) = erf(sqrt(x)); erf(1) = 0.8427007929
    CHECK(gamma_p(0.5, 1.0) == Approx(0.8427007929).epsilon(1e-10));
    // P(1, x) = 1 - exp(-x)
    CHECK(gamma_p(1.0, 0.7) == Approx(1.0 - std::exp(-0.7)).epsilon(1e-12));
    CHECK(gamma_p(2.5, 0.0) == 0.0);
    CHECK(gamma_p(2.5, 1e4) == Approx(1.0).epsilon(1e-13));
    CHECK_THROWS_AS(gamma_p(0.0, 1.0), NumericalError);
}

TEST_CASE("chi-square cdf closed forms", "[special]") {
    // df = 2 is Exp(1/2): F(x) = 1 - exp(-x/2), so F(2 ln 2) = 1/2
    CHECK(chi2_cdf(2.0, 2.0 * std::log(2.0)) == Approx(0.5).epsilon(1e-12));
    // df = 1: F(x) = 2 Phi(sqrt(x)) - 1
    const double x = 2.25;
    CHECK(chi2_cdf(1.0, x) == Approx(2.0 * normal_cdf(std::sqrt(x)) - 1.0).epsilon(1e-12));
    CHECK(chi2_cdf(5.0, 0.0) == 0.0);
    CHECK(chi2_cdf(5.0, -3.0) == 0.0);
}

TEST_CASE("chi-square quantiles match the standard table", "[special]") {
    // 0.95 quantiles: df 1 -> 3.841458821, df 3 -> 7.814727903, df 15 -> 24.99579014
    CHECK(chi2_quantile(1.0, 0.95) == Approx(3.841458821).epsilon(1e-7));
    CHECK(chi2_quantile(3.0, 0.95) == Approx(7.814727903).epsilon(1e-7));
    CHECK(chi2_quantile(15.0, 0.95) == Approx(24.99579014).epsilon(1e-7));

    SECTION("round trip") {
        for (double df : {1.0, 4.0, 15.0, 40.0}) {
            for (double p : {0.01, 0.2, 0.5, 0.95, 0.999}) {
                CHECK(chi2_cdf(df, chi2_quantile(df, p)) == Approx(p).margin(1e-9));
            }
        }
    }
    SECTION("domain errors") {
        CHECK_THROWS_AS(chi2_quantile(3.0, 0.0), NumericalError);
        CHECK_THROWS_AS(chi2_quantile(3.0, 1.0), NumericalError);
    }
}

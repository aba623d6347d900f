// Linear-model hypothesis structure: basis evaluation, the unweighted
// residual-maker M = I - B(B'B)^-1 B', its measure-weighted counterpart
// N = D [I - B(B'DB)^-1 B'D], and the weighted L2 projection of a function
// onto the basis span (normal equations over the measure's atoms).

#pragma once

#include <functional>
#include <iostream>
#include <string>

#include "gpfbst/errors.hpp"
#include "gpfbst/gp.hpp"
#include "gpfbst/measure.hpp"
#include "gpfbst/numerics.hpp"

namespace gpfbst {

// Library-wide warning hook (zero-weight atoms, diagnostic disagreements).
inline std::function<void(const std::string&)>& warn_handler() {
    static std::function<void(const std::string&)> h = [](const std::string& msg) {
        std::cerr << "warning: " << msg << "\n";
    };
    return h;
}

inline void warn(const std::string& msg) {
    if (warn_handler()) warn_handler()(msg);
}

struct LinearBasis {
    int k = 0;
    std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&)> eval;
    std::string name;
};

inline LinearBasis intercept_only() {
    LinearBasis b;
    b.k = 1;
    b.eval = [](const Eigen::RowVectorXd&) {
        Eigen::RowVectorXd r(1);
        r << 1.0;
        return r;
    };
    b.name = "intercept-only";
    return b;
}

// 1 and the first covariate coordinate (scalar-covariate regression line).
inline LinearBasis intercept_slope() {
    LinearBasis b;
    b.k = 2;
    b.eval = [](const Eigen::RowVectorXd& x) {
        Eigen::RowVectorXd r(2);
        r << 1.0, x(0);
        return r;
    };
    b.name = "intercept+slope";
    return b;
}

/** Basis given by explicit column values at known points; evaluation is an
 *  exact-match row lookup. */
inline LinearBasis tabulated_basis(const PointMatrix& points, const Matrix& columns,
                                   const std::string& name) {
    if (points.rows() != columns.rows())
        throw NumericalError("tabulated_basis: row counts disagree");
    LinearBasis b;
    b.k = static_cast<int>(columns.cols());
    b.name = name;
    b.eval = [points, columns](const Eigen::RowVectorXd& x) {
        for (Eigen::Index i = 0; i < points.rows(); ++i)
            if (points.row(i) == x) return Eigen::RowVectorXd(columns.row(i));
        throw NumericalError("tabulated_basis: point not in table");
    };
    return b;
}

inline Matrix design_matrix(const LinearBasis& b, const PointMatrix& points) {
    if (points.rows() == 0) throw NumericalError("design_matrix: no points");
    Matrix out(points.rows(), b.k);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const Eigen::RowVectorXd row = b.eval(points.row(i));
        if (row.size() != b.k)
            throw NumericalError("design_matrix: basis row has wrong length");
        out.row(i) = row;
    }
    return out;
}

enum class ProjectionKind { UnweightedM, WeightedN };

struct ProjectionPair {
    Matrix matrix;
    ProjectionKind kind = ProjectionKind::UnweightedM;
    std::string basis_name;
    PointMatrix points;
};

/** M = I - B(B'B)^-1 B': symmetric idempotent annihilator of the basis span
 *  on the given points. */
inline ProjectionPair projection_m(const LinearBasis& b, const PointMatrix& points) {
    const Matrix bm = design_matrix(b, points);
    Matrix gram = symmetrize(bm.transpose() * bm);
    Matrix solved;
    try {
        solved = solve_spd(gram, Matrix(bm.transpose()));
    } catch (const NotPositiveDefinite&) {
        throw RankDeficient("projection_m: design matrix is rank-deficient");
    }
    ProjectionPair p;
    p.matrix = symmetrize(Matrix::Identity(points.rows(), points.rows()) - bm * solved);
    p.kind = ProjectionKind::UnweightedM;
    p.basis_name = b.name;
    p.points = points;
    return p;
}

/** N = D [I - B(B'DB)^-1 B'D] with D = diag of the measure's weights at the
 *  points; h'Nh is the squared weighted L2 distance from h to the basis
 *  span. Points without atom mass contribute zero weight (with a notice). */
inline ProjectionPair projection_n(const LinearBasis& b, const PointMatrix& points,
                                   const CovariateMeasure& w) {
    const Matrix bm = design_matrix(b, points);
    Vector d(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        d(i) = w.weight_at(points.row(i));
        if (!(d(i) > 0.0))
            warn("projection_n: point " + std::to_string(i) +
                 " carries no atom mass and is ignored");
    }
    Matrix gram = symmetrize(bm.transpose() * d.asDiagonal() * bm);
    Matrix solved;  // (B'DB)^-1 B'D
    try {
        solved = solve_spd(gram, Matrix(bm.transpose() * d.asDiagonal()));
    } catch (const NotPositiveDefinite&) {
        throw RankDeficient("projection_n: basis is rank-deficient under the weights");
    }
    ProjectionPair p;
    p.matrix = symmetrize(d.asDiagonal() * (Matrix::Identity(points.rows(), points.rows()) -
                                            bm * solved));
    p.kind = ProjectionKind::WeightedN;
    p.basis_name = b.name;
    p.points = points;
    return p;
}

struct WeightedL2Projection {
    Vector beta_tilde;
    double distance = 0.0;
};

/** Weighted L2 projection of h (values on the measure's atoms) onto the
 *  basis span: beta = A^-1 h_b with A[i,j] = E[b_i b_j], h_b[i] = E[h b_i],
 *  expectations running over the atoms. distance is the weighted L2 norm of
 *  the residual. */
inline WeightedL2Projection weighted_l2_project(const Vector& h_values, const LinearBasis& b,
                                       const CovariateMeasure& w) {
    if (h_values.size() != w.atoms.rows())
        throw NumericalError("weighted_l2_project: h length disagrees with atom count");
    const Matrix bm = design_matrix(b, w.atoms);
    const Matrix a = symmetrize(bm.transpose() * w.weights.asDiagonal() * bm);
    const Vector hb = bm.transpose() * w.weights.asDiagonal() * h_values;
    WeightedL2Projection out;
    try {
        out.beta_tilde = solve_spd(a, hb);
    } catch (const NotPositiveDefinite&) {
        throw RankDeficient("weighted_l2_project: basis Gram matrix is singular under w");
    }
    const Vector resid = h_values - bm * out.beta_tilde;
    out.distance = std::sqrt((resid.array().square() * w.weights.array()).sum());
    return out;
}

}  // namespace gpfbst

// Discrete covariate measures: the uniform measure on a finite domain and
// the Dirichlet-process posterior-predictive atoms over observed covariates.

#pragma once

#include <string>

#include "gpfbst/errors.hpp"
#include "gpfbst/gp.hpp"
#include "gpfbst/numerics.hpp"

namespace gpfbst {

enum class MeasureSource { FiniteUniform, DpPredictive, Explicit };

struct CovariateMeasure {
    PointMatrix atoms;            // one atom per row, pairwise distinct
    Vector weights;               // positive atom masses
    double total_atom_mass = 1.0; // sum of weights
    double continuous_mass = 0.0; // remainder carried by a non-atomic part
    MeasureSource source = MeasureSource::Explicit;
    double tau = 0.0;             // DP concentration (DpPredictive only)
    std::string base_label;       // description of the DP base measure

    // weight of an exactly matching atom, 0 when absent
    double weight_at(const Eigen::RowVectorXd& x) const {
        for (Eigen::Index i = 0; i < atoms.rows(); ++i)
            if (atoms.row(i) == x) return weights(i);
        return 0.0;
    }
};

namespace detail {

inline void require_distinct_rows(const PointMatrix& x, const char* where) {
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = i + 1; j < x.rows(); ++j)
            if (x.row(i) == x.row(j))
                throw DuplicateAtoms(std::string(where) + ": rows " + std::to_string(i) +
                                     " and " + std::to_string(j) + " coincide");
}

}  // namespace detail

/** Uniform probability measure on a finite list of distinct points. */
inline CovariateMeasure finite_uniform(const PointMatrix& domain) {
    if (domain.rows() == 0) throw EmptyDataset("finite_uniform: empty domain");
    detail::require_distinct_rows(domain, "finite_uniform");
    CovariateMeasure m;
    m.atoms = domain;
    m.weights = Vector::Constant(domain.rows(), 1.0 / static_cast<double>(domain.rows()));
    m.total_atom_mass = 1.0;
    m.continuous_mass = 0.0;
    m.source = MeasureSource::FiniteUniform;
    return m;
}

/** Atomic part of the Dirichlet-process posterior predictive given observed
 *  covariates: atom x gets mass count(x) / (tau + n).
 *
 *  With a continuous base measure the remaining tau / (tau + n) is carried as
 *  continuous_mass (no atoms). With a discrete base the base is taken to be
 *  the empirical distribution of the observations, which folds the remainder
 *  back onto the atoms so masses become count(x) / n. */
inline CovariateMeasure dp_predictive(double tau, const PointMatrix& x_obs,
                                      bool base_is_continuous = true,
                                      const std::string& base_label = "") {
    if (!(tau >= 0.0)) throw NumericalError("dp_predictive: tau must be >= 0");
    if (x_obs.rows() == 0) throw EmptyDataset("dp_predictive: no observations");

    const CollapsedData c = collapse(x_obs, Vector::Zero(x_obs.rows()));
    const double n = static_cast<double>(x_obs.rows());

    CovariateMeasure m;
    m.atoms = c.unique_rows;
    if (base_is_continuous) {
        m.weights = c.counts / (tau + n);
        m.continuous_mass = tau / (tau + n);
    } else {
        m.weights = c.counts / n;
        m.continuous_mass = 0.0;
    }
    m.total_atom_mass = m.weights.sum();
    m.source = MeasureSource::DpPredictive;
    m.tau = tau;
    m.base_label = base_label;
    return m;
}

/** True iff every required point carries strictly positive atom mass. */
inline bool check_support(const CovariateMeasure& m, const PointMatrix& required) {
    for (Eigen::Index i = 0; i < required.rows(); ++i)
        if (!(m.weight_at(required.row(i)) > 0.0)) return false;
    return true;
}

}  // namespace gpfbst

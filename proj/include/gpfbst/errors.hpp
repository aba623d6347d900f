// Exception taxonomy shared across the library.
//
// Everything derives from Error so callers can catch one base type; the CLI
// maps the three leaf families to distinct exit codes (config/usage, data,
// numerical).

#pragma once

#include <stdexcept>
#include <string>

namespace gpfbst {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// ----- numerical failures -----

struct NumericalError : Error {
    using Error::Error;
};

// Cholesky pivot <= 0 (matrix not positive definite, even after jitter).
struct NotPositiveDefinite : NumericalError {
    using NumericalError::NumericalError;
};

// Iterative eigensolver or series failed to converge.
struct NoConvergence : NumericalError {
    using NumericalError::NumericalError;
};

// Root bracket [lo, hi] does not straddle a sign change.
struct NoBracket : NumericalError {
    using NumericalError::NumericalError;
};

// Quadrature failed to reach its accuracy target.
struct IntegrationFailure : NumericalError {
    using NumericalError::NumericalError;
};

// Basis design matrix is rank-deficient on the given points/weights.
struct RankDeficient : NumericalError {
    using NumericalError::NumericalError;
};

// ----- data failures -----

struct DataError : Error {
    using Error::Error;
};

// Malformed CSV/config input; message carries the line number.
struct ParseError : DataError {
    using DataError::DataError;
};

struct EmptyDataset : DataError {
    using DataError::DataError;
};

// A discrete measure was handed coincident atoms.
struct DuplicateAtoms : DataError {
    using DataError::DataError;
};

// Stokes-law radicand v - delta - eta went negative for some record.
struct NegativeRadicand : DataError {
    using DataError::DataError;
};

// ----- usage/config failures -----

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace gpfbst

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pensim {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InfeasibleConstraints : Error {
    using Error::Error;
};

struct NonPSDCovariance : Error {
    using Error::Error;
};

struct AgeOutOfRange : Error {
    using Error::Error;
};

// Thrown by the hazard-model fit when some coefficient has no information
// in the data (e.g. no observed deaths in that covariate direction).
struct NonIdentifiable : Error {
    std::vector<int> coefficients;  // indices of the offending coefficients
    NonIdentifiable(const std::string& msg, std::vector<int> coeffs)
        : Error(msg), coefficients(std::move(coeffs)) {}
};

struct EmptyBin : Error {
    using Error::Error;
};

struct UnknownBin : Error {
    using Error::Error;
};

struct PayoutOutOfRange : Error {
    using Error::Error;
};

struct DivisionByZero : Error {
    using Error::Error;
};

struct NonpositiveInitialLiabilities : Error {
    using Error::Error;
};

struct EvaluationFailure : Error {
    using Error::Error;
};

// Config and file-format problems; message carries the offending path/section.
struct ConfigError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

}  // namespace pensim

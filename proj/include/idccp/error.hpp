#pragma once

#include <stdexcept>
#include <string>

namespace idccp {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A documented precondition (symmetry, PD-ness, ...) does not hold.
class ContractError : public Error {
public:
    using Error::Error;
};

// Rank deficiency in a factorization.
class SingularityError : public Error {
public:
    using Error::Error;
};

// A NaN or Inf was produced or supplied.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

// QR retraction could not restore a full-rank frame.
class RetractionError : public Error {
public:
    using Error::Error;
};

// Bad configuration: unknown keys, invalid values, incompatible layer specs.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Bad or missing data: empty classes, labels out of range, unreadable input.
class DataError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite quantity.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// A finite-difference or eigen oracle could not produce a reference value.
class OracleError : public Error {
public:
    using Error::Error;
};

} // namespace idccp

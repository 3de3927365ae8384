#pragma once

#include <stdexcept>
#include <string>

namespace volnp {

// Base class for every error the library raises. Each failure condition has
// its own concrete type so callers can catch selectively.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid numeric input (non-finite value, parameter outside its bounds).
struct DomainError : Error {
    using Error::Error;
};

// Quoted price violates the static no-arbitrage bounds of the contract.
struct OutOfBounds : Error {
    using Error::Error;
};

// Iterative solver exhausted its iteration cap.
struct NoConvergence : Error {
    using Error::Error;
};

// Not enough quotes to satisfy a sampling or calibration precondition.
struct InsufficientQuotes : Error {
    using Error::Error;
};

// Every optimizer start diverged or left the feasible region.
struct CalibrationFailed : Error {
    using Error::Error;
};

// Kernel matrix factorization failed even after jitter escalation.
struct SingularKernel : Error {
    using Error::Error;
};

// Tensor operands have incompatible shapes.
struct ShapeMismatch : Error {
    using Error::Error;
};

// backward() called on a non-scalar tensor.
struct NotScalar : Error {
    using Error::Error;
};

// Paired lists (predictions/targets) differ in length.
struct LengthMismatch : Error {
    using Error::Error;
};

// A training stage requires a data source the day records do not carry.
struct DataStageMismatch : Error {
    using Error::Error;
};

// Preprocessing removed every record of a day.
struct EmptyAfterFilter : Error {
    using Error::Error;
};

// Bad configuration file, flag value, or referenced path.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem read/write failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace volnp

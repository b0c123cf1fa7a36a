#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pfp {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A tensor or weight container broke one of its type invariants.
/// Carries the first offending flat index and the values seen there.
struct InvariantViolation : Error {
    std::size_t index;
    double mean;
    double spread;

    InvariantViolation(const std::string& msg, std::size_t idx, double m, double s)
        : Error(msg + " (index " + std::to_string(idx) + ", mean " + std::to_string(m) +
                ", spread " + std::to_string(s) + ")"),
          index(idx),
          mean(m),
          spread(s) {}
};

struct ShapeMismatch : Error {
    using Error::Error;
};

/// Pool window size does not divide the spatial dims.
struct ShapeIndivisible : ShapeMismatch {
    using ShapeMismatch::ShapeMismatch;
};

/// An operator was handed tensors/weights in the wrong moment representation.
struct RepresentationMismatch : Error {
    using Error::Error;
};

/// Container-level structural problem (magic, version, truncated blob, bad manifest).
struct FormatError : Error {
    using Error::Error;
};

/// Stored CRC32 does not match the file contents.
struct ChecksumError : Error {
    using Error::Error;
};

/// Representation contract between consecutive layers is not closed.
struct ContractError : Error {
    using Error::Error;
};

struct InvalidConfig : Error {
    using Error::Error;
};

struct TooFewSamples : Error {
    using Error::Error;
};

struct EmptyClass : Error {
    using Error::Error;
};

struct NonPositiveFactor : Error {
    using Error::Error;
};

}  // namespace pfp

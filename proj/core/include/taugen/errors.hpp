#pragma once

#include <stdexcept>
#include <string>

namespace taugen {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File/handshake problems: wrong magic, malformed header.
struct FormatError : Error {
    using Error::Error;
};

// Payload shorter/longer than the header promises.
struct SizeError : Error {
    using Error::Error;
};

// Non-finite or out-of-range values in otherwise well-formed data.
struct DataError : Error {
    using Error::Error;
};

struct ParameterError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Manifest/config cross-field validation.
struct ValidationError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

struct CheckError : Error {
    using Error::Error;
};

struct LookupError : Error {
    using Error::Error;
};

struct PairingError : Error {
    using Error::Error;
};

struct EvaluationError : Error {
    using Error::Error;
};

}  // namespace taugen

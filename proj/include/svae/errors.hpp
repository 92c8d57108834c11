#pragma once

#include <stdexcept>
#include <string>

namespace svae {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or width mismatch between operands (names the offending layer when one exists).
class DimensionError : public Error {
public:
    using Error::Error;
};

// A caller broke an operation's contract (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

// Hyperparameter out of its admissible range.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Input value outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// A nuisance index was used where a classifier index is required, or vice versa.
class LatentSplitError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

// File parsing.
class FormatError : public Error {
public:
    using Error::Error;
};

class LengthError : public Error {
public:
    using Error::Error;
};

class MagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedError : public LengthError {
public:
    using LengthError::LengthError;
};

}  // namespace svae

#pragma once

#include <stdexcept>
#include <string>

namespace qmr {

/// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument outside its documented domain (sigma <= 0, unknown modifier, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Two operands whose shapes must agree do not.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An output or input size is degenerate for the requested operation.
class SizeError : public Error {
public:
    using Error::Error;
};

class DecodeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Input carries no information for the operation (all-zero image for SNR, ...).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class EdgeNotFoundError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class GridMismatchError : public Error {
public:
    using Error::Error;
};

}  // namespace qmr

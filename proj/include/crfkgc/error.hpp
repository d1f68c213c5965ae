#pragma once

#include <stdexcept>
#include <string>

namespace crfkgc {

// Base error for everything the engine raises on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input files (triple files, task files, configs, checkpoints).
class IngestError : public Error {
public:
    explicit IngestError(const std::string& what) : Error(what) {}
};

// Shape mismatches and invalid tensor arguments.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// Non-finite values detected during a forward pass or sampling chain.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what) {}
};

} // namespace crfkgc

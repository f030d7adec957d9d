#pragma once
// Error taxonomy shared by all modules. Every category maps to a CLI exit
// code: usage errors exit 2, data/validation errors exit 3, anything else 4.

#include <stdexcept>
#include <string>

namespace pathgrade {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad line, wrong field count).
class ParseError : public Error {
public:
    using Error::Error;
};

// Input violates the graph schema (unknown kind/relation, signature mismatch).
class SchemaError : public Error {
public:
    using Error::Error;
};

// Structurally broken graph (dangling grade node, duplicate enrollment).
class IntegrityError : public Error {
public:
    using Error::Error;
};

// Out-of-range id or index.
class RangeError : public Error {
public:
    using Error::Error;
};

// Tensor shape mismatch; message names the offending primitive.
class DimensionError : public Error {
public:
    using Error::Error;
};

// API misuse (backward called twice, missing reset).
class StateError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Metric has no defined value on the given inputs (e.g. AUC on one class).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite value during optimization; message names the first bad node.
class NumericError : public Error {
public:
    using Error::Error;
};

inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
        dynamic_cast<const IntegrityError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
        dynamic_cast<const UndefinedMetricError*>(&e) || dynamic_cast<const RangeError*>(&e)) {
        return 3;
    }
    return 4;
}

}  // namespace pathgrade

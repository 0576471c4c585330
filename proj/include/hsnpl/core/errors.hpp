#pragma once

#include <stdexcept>
#include <string>

namespace hsnpl {

/// Input that violates a documented contract (bad file, bad shape, bad flag).
/// The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Overflow, NaN or infinity detected during a forward pass or training.
/// The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace hsnpl

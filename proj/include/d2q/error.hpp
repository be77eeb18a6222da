#pragma once

#include <stdexcept>
#include <string>

namespace d2q {

// Invalid hyperparameters, layer sizes, unknown names.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Vector/matrix dimensions that do not chain.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller broke an API contract (stale cache, wrong transition width, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Operation invoked before its precondition holds (empty buffer, ...).
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A loss, gradient or parameter became NaN/Inf.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Metrics files that cannot be aggregated together.
class AlignmentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace d2q

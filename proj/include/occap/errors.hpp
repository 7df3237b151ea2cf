#pragma once

#include <stdexcept>
#include <string>

namespace occap {

// Error taxonomy shared by every module. The CLI maps these onto exit
// codes: UsageError -> 1, DataError/ContractError -> 2, NumericError -> 3.

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data: malformed files, failed validation, missing upstream
// artifacts.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: a precondition the caller is responsible for.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : ContractError {
    using ContractError::ContractError;
};

// Non-finite values produced during computation.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace occap

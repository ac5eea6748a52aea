#ifndef COUNTGNN_ERROR_HPP
#define COUNTGNN_ERROR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace countgnn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid graph structure (dangling endpoints, bad ids).
struct StructureError : Error {
    using Error::Error;
};

/// Label outside the vocabulary range.
struct VocabError : Error {
    using Error::Error;
};

/// Malformed or schema-violating serialized input.
struct SchemaError : Error {
    using Error::Error;
};

/// Tensor shape mismatch.
struct ShapeError : Error {
    using Error::Error;
};

/// Backtracking step budget exhausted. The partial count is never exact
/// and must be discarded by the caller.
struct BudgetError : Error {
    std::uint64_t steps_used;
    BudgetError(const std::string& msg, std::uint64_t steps)
        : Error(msg), steps_used(steps) {}
};

} // namespace countgnn

#endif

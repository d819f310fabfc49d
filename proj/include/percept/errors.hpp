#pragma once

#include <stdexcept>
#include <string>

namespace percept {

// Invalid or inconsistent input data: malformed files, dangling references,
// unknown enum tokens, contract violations at module boundaries.
// The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape incompatibility. Messages name the primitive and the shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A forward pass or training step produced NaN/Inf.
// The CLI maps this to exit code 3.
struct TrainingDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace percept

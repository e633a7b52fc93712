#pragma once

#include <stdexcept>
#include <string>

namespace vida {

// Dimension mismatch between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Configuration value outside its admissible range.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong lifecycle state (e.g. backward before forward).
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed weights or config document.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Optimisation produced a non-finite loss.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace vida

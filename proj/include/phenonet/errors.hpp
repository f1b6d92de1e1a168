#pragma once

#include <stdexcept>

namespace phenonet {

// Shape or size disagreement between tensors or layers.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid or mutually inconsistent configuration values.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed input file; the message carries a line number where known.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite numbers are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Token or row id outside the valid range.
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Mismatched parameter/gradient/optimizer-state keys.
struct IntegrityError : std::logic_error {
    using std::logic_error::logic_error;
};

// Rejected input data (non-binary labels, wrong corpus for a checkpoint).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace phenonet

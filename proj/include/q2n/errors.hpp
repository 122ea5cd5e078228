#pragma once

#include <stdexcept>
#include <string>

namespace q2n {

// Base class for everything this library throws; the CLI maps the
// subclasses below onto stable exit codes.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File could not be opened / read / written.
struct io_error : error {
    using error::error;
};

// Container is not a valid tensor file (bad magic, malformed header).
struct format_error : error {
    using error::error;
};

// Header promised more payload bytes than the file contains.
struct truncation_error : error {
    using error::error;
};

// Payload parsed but holds invalid contents (NaN/Inf element).
struct data_error : error {
    using error::error;
};

// Shapes of two operands do not line up.
struct dimension_error : error {
    using error::error;
};

// A parameter violates an operation's precondition.
struct argument_error : error {
    using error::error;
};

// Iteration failed to converge, or a matrix is numerically singular.
struct numerical_error : error {
    using error::error;
};

} // namespace q2n

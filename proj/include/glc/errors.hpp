#pragma once

#include <stdexcept>
#include <string>

namespace glc {

// Thrown for unreadable, malformed, or inconsistent data (files, datasets).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a computation produces or receives non-finite values.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace glc

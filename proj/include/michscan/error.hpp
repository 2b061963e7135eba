#pragma once

#include <stdexcept>
#include <string>

namespace michscan {

/// Base class for all michscan failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent on-disk data (bad magic, ragged rows, ...).
struct FormatError : Error {
    using Error::Error;
};

/// An argument violates an operation's preconditions.
struct InvalidArgument : Error {
    using Error::Error;
};

/// Statistically meaningless input: constant series, fully tied groups,
/// flat spectra. Signalled instead of fabricating a value.
struct DegenerateInput : Error {
    using Error::Error;
};

} // namespace michscan

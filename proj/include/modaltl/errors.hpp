#pragma once

#include <stdexcept>
#include <string>

namespace modaltl {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-physical beam parameters or inconsistent mesh settings.
class InvalidModelError : public Error {
public:
    using Error::Error;
};

/// Mass matrix could not be Cholesky-factorized.
class SingularMassError : public Error {
public:
    using Error::Error;
};

/// QL iteration did not converge.
class EigensolverError : public Error {
public:
    using Error::Error;
};

/// Sensor position that does not coincide with a mesh node.
class LayoutError : public Error {
public:
    using Error::Error;
};

/// Index or segment outside its admissible range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Network shape/spec inconsistency.
class SpecError : public Error {
public:
    using Error::Error;
};

/// Loss or gradient became NaN/Inf during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed configuration or artifact file. `path` is a JSON pointer or
/// file:line location.
class ConfigError : public Error {
public:
    ConfigError(const std::string& path, const std::string& what)
        : Error(path.empty() ? what : path + ": " + what), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Artifacts whose dimensions disagree (e.g. network n,m vs stream n,m).
class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

}  // namespace modaltl

#pragma once

#include <stdexcept>
#include <string>

namespace lossbal {

/// Invalid configuration, malformed input document, or mismatched dimensions.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A NaN/Inf surfaced where a finite value is required.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lossbal

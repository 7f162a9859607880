#pragma once

#include <stdexcept>
#include <string>

namespace survcate {

// Error classes map onto distinct CLI exit codes.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace survcate

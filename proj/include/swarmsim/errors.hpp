#pragma once

#include <stdexcept>
#include <string>

namespace swarmsim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NegativePopulationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoPeerAvailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace swarmsim

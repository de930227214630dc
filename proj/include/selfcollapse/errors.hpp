#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace selfcollapse {

/// Invalid input: bad configuration, violated precondition, mismatched grids.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The numerics went wrong: eigensolver non-convergence, singular solve,
/// norm drift beyond tolerance.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Compact rendering of a number for messages.
inline std::string show(double v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace selfcollapse

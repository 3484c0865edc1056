#ifndef IMPX_UTIL_HPP
#define IMPX_UTIL_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace impx {

// Signed power: sign(x) |x|^a, continuous at 0 for a > 0.
inline double spow(double x, double a) {
    if (x == 0.0) return 0.0;
    double p = std::pow(std::abs(x), a);
    return x < 0.0 ? -p : p;
}

// |x|^a with the same 0 guard.
inline double apow(double x, double a) {
    if (x == 0.0) return 0.0;
    return std::pow(std::abs(x), a);
}

struct invalid_parameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct solver_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace impx

#endif

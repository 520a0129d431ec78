#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvstop {

/// Raised when a numerical kernel produces a state it cannot continue from
/// (non-finite particle, SPIDE blow-up, density escaping its grid).
class NumericalAbort : public std::runtime_error {
public:
    NumericalAbort(const std::string& what, double time, std::ptrdiff_t index = -1)
        : std::runtime_error(what), time_(time), index_(index) {}

    double time() const noexcept { return time_; }
    /// Offending particle or grid node, -1 when not applicable.
    std::ptrdiff_t index() const noexcept { return index_; }

private:
    double time_;
    std::ptrdiff_t index_;
};

}  // namespace mvstop

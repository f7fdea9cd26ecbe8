#pragma once

#include <stdexcept>
#include <string>

namespace spde {

/// Thrown when the scheme produces a nonfinite state. Carries the step index
/// at which the blow-up was detected.
class numerical_failure : public std::runtime_error {
public:
    numerical_failure(int step, const std::string& what)
        : std::runtime_error(what), step_(step) {}

    int step() const { return step_; }

private:
    int step_;
};

}  // namespace spde

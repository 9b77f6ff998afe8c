#pragma once

#include <stdexcept>
#include <string>

namespace slowcone {

/// An iterative propagator ran out of its step budget.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what + " (achieved residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// A conserved quantity drifted past its tolerance during time stepping.
class ConservationError : public std::runtime_error {
public:
    ConservationError(const std::string& quantity, long step, double drift, double tolerance)
        : std::runtime_error(quantity + " drift " + std::to_string(drift) + " exceeds " + std::to_string(tolerance) +
                             " at step " + std::to_string(step)),
          step_(step), drift_(drift) {}
    long step() const { return step_; }
    double drift() const { return drift_; }

private:
    long step_;
    double drift_;
};

/// Requested Hilbert space or matrix exceeds a configured hard cap.
class CapacityError : public std::length_error {
public:
    using std::length_error::length_error;
};

} // namespace slowcone

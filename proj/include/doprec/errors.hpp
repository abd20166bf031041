#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace doprec {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Solver-side failures (CLI exit code 3).
class SolverError : public Error {
public:
    using Error::Error;
};

class NonConvergence : public SolverError {
public:
    NonConvergence(int iterations, double residual)
        : SolverError("Newton iteration did not converge after " + std::to_string(iterations) +
                      " iterations (residual " + std::to_string(residual) + ")"),
          iterations_(iterations), residual_(residual) {}
    int iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    int iterations_;
    double residual_;
};

class DampingExhausted : public SolverError {
public:
    explicit DampingExhausted(double reached_fraction)
        : SolverError("laser power ramp stalled at fraction " + std::to_string(reached_fraction)),
          reached_(reached_fraction) {}
    double reached_fraction() const { return reached_; }

private:
    double reached_;
};

class CircuitNonConvergence : public SolverError {
public:
    using SolverError::SolverError;
};

// Raised by the forward sweep when one laser position fails.
class SpotFailure : public SolverError {
public:
    SpotFailure(std::size_t spot, const std::string& what)
        : SolverError("spot " + std::to_string(spot) + ": " + what), spot_(spot) {}
    std::size_t spot() const { return spot_; }

private:
    std::size_t spot_;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class DegenerateBatch : public Error {
public:
    using Error::Error;
};

class DegenerateData : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class GraphNotRecorded : public Error {
public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(int epoch, double loss)
        : Error("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch)),
          epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

// Configuration and flag problems (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or unsupported files, failed reads/writes (CLI exit code 4).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace doprec

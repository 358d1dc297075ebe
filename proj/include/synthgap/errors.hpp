#pragma once

#include <stdexcept>
#include <string>

namespace synthgap {

// Error taxonomy used across the project. The CLI maps these onto stable
// exit codes (validation -> 2, I/O -> 3).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or truncated on-disk artifact (manifest, params.bin, ...).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class NotFoundError : public std::runtime_error {
public:
    explicit NotFoundError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradient. Aborting beats silently clipping: a clipped
// run would still be compared against healthy sweep points.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& msg, int epoch)
        : std::runtime_error(msg), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

// Least-squares design matrix is singular (e.g. all x values equal).
class DegenerateDesignError : public std::runtime_error {
public:
    explicit DegenerateDesignError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace synthgap

#pragma once

#include <stdexcept>
#include <string>

namespace nkf {

/// Contract violation on argument shapes (vector lengths, matrix sizes).
class dimension_error : public std::invalid_argument {
public:
    explicit dimension_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical failure that survived the repair policies (jitter escalation,
/// eigenvalue clipping). Carries a short machine-readable kind so callers
/// can report "failed: <kind>" without parsing prose.
class numerical_error : public std::runtime_error {
public:
    numerical_error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

/// numerical_error with the time step at which a recursion aborted.
class estimation_error : public numerical_error {
public:
    estimation_error(const numerical_error& cause, int step)
        : numerical_error(cause.kind(),
                          "step " + std::to_string(step) + ": " + cause.what()),
          step_(step) {}

    int step() const { return step_; }

private:
    int step_;
};

/// Invalid or unparseable configuration / file format.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nkf

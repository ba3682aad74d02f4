#pragma once

#include <stdexcept>
#include <string>

namespace cldc {

/// Shape or dimension mismatch between tensors, bundles, or caches.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid run configuration (unknown tags, bad ranges, unparseable files).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values where finite ones are required (gradients, losses).
struct NumericFault : std::runtime_error {
    explicit NumericFault(const std::string& what) : std::runtime_error(what) {}
};

/// Training data inconsistent with the declared action space.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// An agent issued an action outside the task's active set.
struct IllegalActionError : std::runtime_error {
    explicit IllegalActionError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cldc

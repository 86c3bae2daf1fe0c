#pragma once

#include <stdexcept>
#include <string>

namespace fpw {

/// Input outside the domain of a geometric mapping (e.g. a point outside the
/// fisheye circle, a zero direction vector, a degenerate view frame).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Invalid or inconsistent configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or mismatched data files (detections, caches, images). The CLI
/// maps this to exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fpw

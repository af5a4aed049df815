#pragma once

#include <stdexcept>
#include <string>

namespace vaesynth {

/// Bad argument, shape or configuration. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
   public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class ShapeError : public ValidationError {
   public:
    explicit ShapeError(const std::string& what) : ValidationError(what) {}
};

/// Filesystem or format failure. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
   public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class FormatError : public IoError {
   public:
    explicit FormatError(const std::string& what) : IoError(what) {}
};

}  // namespace vaesynth

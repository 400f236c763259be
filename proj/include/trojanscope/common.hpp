#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace trojanscope {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Base class for all toolkit errors. Subclasses map to CLI exit codes:
// IoError -> 2, everything else -> 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/batch shape mismatches, out-of-range class indices.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid domain configuration: bad trigger spec, degenerate poisoning
// ratio, empty datasets, malformed mapping.
class SpecError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk artifacts. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg), offset_(-1) {}
    FormatError(const std::string& msg, long long byte_offset)
        : Error(msg + " at byte " + std::to_string(byte_offset)),
          offset_(byte_offset) {}
    long long byte_offset() const { return offset_; }

private:
    long long offset_;
};

// Non-finite values, iteration budgets exhausted.
class NumericError : public Error {
public:
    using Error::Error;
};

// Filesystem failures: missing paths, unreadable/unwritable files.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace trojanscope

#pragma once

#include <stdexcept>
#include <string>

namespace ltdd {

// Bad argument shapes handed to a graph primitive or parameter utility.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A value or configuration violates a documented constraint.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Training or distillation produced a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Expert segment whose start and end coincide, so the matching loss has a
// zero denominator.
class DegenerateSegmentError : public std::runtime_error {
public:
    DegenerateSegmentError() : std::runtime_error("degenerate expert segment") {}
};

// Malformed on-disk artifact (trajectory container or IDX file).
class FormatError : public std::runtime_error {
public:
    enum class Kind {
        bad_magic,
        version_mismatch,
        checksum_mismatch,
        truncated,
        count_mismatch,
        malformed_header,
        io,
    };

    FormatError(Kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace ltdd

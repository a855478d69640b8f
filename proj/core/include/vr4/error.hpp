#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vr4 {

// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or configuration. The CLI maps these to exit status 1.
class InputError : public Error {
public:
    using Error::Error;
};

// A record in a file failed validation. Carries the location for reporting.
class RecordError : public InputError {
public:
    RecordError(std::string file, std::size_t line, std::string field, const std::string& what)
        : InputError(file + ":" + std::to_string(line) + ": field '" + field + "': " + what),
          file_(std::move(file)), line_(line), field_(std::move(field)) {}

    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    std::string file_;
    std::size_t line_;
    std::string field_;
};

// Structured parse failure; offset is the first offending byte.
class ParseError : public InputError {
public:
    ParseError(std::size_t offset, const std::string& what)
        : InputError("parse error at offset " + std::to_string(offset) + ": " + what),
          offset_(offset), reason_(what) {}

    std::size_t offset() const { return offset_; }
    const std::string& reason() const { return reason_; }

private:
    std::size_t offset_;
    std::string reason_;
};

class NotFoundError : public InputError {
public:
    using InputError::InputError;
};

} // namespace vr4

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace citeframe {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class UnknownSchemaError : public Error {
  public:
    explicit UnknownSchemaError(const std::string &name)
        : Error("unknown schema: '" + name + "'"), name_(name) {}

    [[nodiscard]] const std::string &name() const noexcept { return name_; }

  private:
    std::string name_;
};

/// A label (or record) failed validation against a schema or invariant.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// A malformed input file. `line()` is 1-based, 0 when not tied to a line.
class FormatError : public Error {
  public:
    FormatError(const std::string &path, std::size_t line, const std::string &what)
        : Error(path + (line > 0 ? ":" + std::to_string(line) : std::string{}) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// Transport-level failure talking to the completion endpoint.
class BackendError : public Error {
  public:
    using Error::Error;
};

/// A model response that could not be turned into a label. Keeps the raw text for audit.
class ParseError : public Error {
  public:
    enum class Kind { no_label, label_not_in_schema };

    ParseError(Kind kind, std::string raw, const std::string &what)
        : Error(what), kind_(kind), raw_(std::move(raw)) {}

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string &raw() const noexcept { return raw_; }

  private:
    Kind kind_;
    std::string raw_;
};

}  // namespace citeframe

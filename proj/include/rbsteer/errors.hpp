#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rbsteer {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// File could not be opened / read / written.
class IoError : public Error {
  public:
    using Error::Error;
};

// Malformed input; the message carries file/line/field context where known.
class ParseError : public Error {
  public:
    explicit ParseError(const std::string& message) : Error(message) {}
    ParseError(const std::string& file, std::size_t line, const std::string& detail)
        : Error(file + ":" + std::to_string(line) + ": " + detail), line_(line) {}

    std::size_t line() const { return line_; }

  private:
    std::size_t line_ = 0;
};

// Invalid argument combination or out-of-range parameter.
class UsageError : public Error {
  public:
    using Error::Error;
};

// Every action available at the current context is masked out.
class UnsatisfiableMaskError : public Error {
  public:
    using Error::Error;
};

// Remote generator could not be reached or answered with an error.
class TransportError : public Error {
  public:
    explicit TransportError(const std::string& message, int status = 0, int attempts = 0)
        : Error(message), status_(status), attempts_(attempts) {}

    int status() const { return status_; }
    int attempts() const { return attempts_; }

  private:
    int status_;
    int attempts_;
};

// Mock generator script and the actual call sequence disagree.
class MockScriptError : public Error {
  public:
    MockScriptError(const std::string& message, std::size_t step)
        : Error("mock step " + std::to_string(step) + ": " + message), step_(step) {}

    std::size_t step() const { return step_; }

  private:
    std::size_t step_;
};

}  // namespace rbsteer

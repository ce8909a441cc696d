#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace emiv {

/// Error category, mapped onto process exit codes by the CLI.
enum class ErrorKind {
    validation,  // bad configuration or arguments          -> exit 2
    numerical,   // solver failure / diagnosed divergence   -> exit 3
    io,          // missing, malformed or unwritable files  -> exit 4
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) { throw Error(ErrorKind::validation, msg); }
[[noreturn]] inline void fail_numerical(const std::string& msg) { throw Error(ErrorKind::numerical, msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { throw Error(ErrorKind::io, msg); }

/// Non-fatal diagnostic on stderr; never interleaved with data output.
inline void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

}  // namespace emiv

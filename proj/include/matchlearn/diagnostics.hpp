#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace matchlearn {

/// Categories line up with the CLI exit codes.
enum class ErrorKind { argument = 2, numerical = 3, data_format = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& what)
      : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable tag, e.g. "singular_core".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what, std::string code = "invalid_argument")
      : Error(ErrorKind::argument, std::move(code), what) {}
};

class NumericalError : public Error {
 public:
  NumericalError(std::string code, const std::string& what)
      : Error(ErrorKind::numerical, std::move(code), what) {}
};

class DataFormatError : public Error {
 public:
  explicit DataFormatError(const std::string& what)
      : Error(ErrorKind::data_format, "data_format", what) {}
};

/// Non-fatal conditions (dropped observations, degenerate spectra, ...) are
/// routed through a process-wide handler. The default handler discards them.
using WarningHandler = std::function<void(const std::string& code, const std::string& message)>;

void set_warning_handler(WarningHandler handler);
void warn(const std::string& code, const std::string& message);

}  // namespace matchlearn

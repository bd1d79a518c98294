#pragma once

#include <stdexcept>
#include <string>

namespace capcrl {

/// Failure classes. The CLI maps these onto exit codes 2, 3 and 4.
enum class ErrorKind { Input, Numerical, NoSolution };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string module, const std::string& what)
      : std::runtime_error("[" + module + "] " + what), kind_(kind), module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

private:
  ErrorKind kind_;
  std::string module_;
};

inline Error input_error(std::string module, const std::string& what) {
  return Error(ErrorKind::Input, std::move(module), what);
}
inline Error numerical_error(std::string module, const std::string& what) {
  return Error(ErrorKind::Numerical, std::move(module), what);
}

}  // namespace capcrl

#pragma once

#include <stdexcept>
#include <string>

namespace pathvit {

// Process exit codes used by the command-line tool.
enum class exit_code : int {
  success = 0,
  usage = 2,
  data = 3,
  numeric = 4,
};

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual exit_code code() const noexcept { return exit_code::data; }
};

// Shapes that do not fit together.
class dimension_error : public error {
 public:
  using error::error;
};

// Labels or indices outside their valid range, unreadable datasets.
class data_error : public error {
 public:
  using error::error;
};

// Malformed file contents. Carries the byte offset where parsing stopped.
class parse_error : public data_error {
 public:
  parse_error(const std::string& what, std::size_t offset)
      : data_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit parse_error(const std::string& what) : data_error(what), offset_(0) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class io_error : public data_error {
 public:
  using data_error::data_error;
};

// Invalid hyperparameter values (dropout rate >= 1, lr_min >= lr_max, ...).
class parameter_error : public error {
 public:
  using error::error;
  exit_code code() const noexcept override { return exit_code::usage; }
};

class config_error : public parameter_error {
 public:
  using parameter_error::parameter_error;
};

// A caller broke a documented precondition (non-scalar backward, all-zero counts).
class contract_error : public error {
 public:
  using error::error;
};

class stratification_error : public data_error {
 public:
  stratification_error(const std::string& what, std::string class_name)
      : data_error(what), class_name_(std::move(class_name)) {}
  const std::string& class_name() const noexcept { return class_name_; }

 private:
  std::string class_name_;
};

// Non-finite values produced during training.
class numeric_error : public error {
 public:
  using error::error;
  exit_code code() const noexcept override { return exit_code::numeric; }
};

}  // namespace pathvit

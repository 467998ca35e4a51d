#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace evolattice {

// Numeric tower: 64-bit scalars and fixed-length vectors of them.
class Value {
 public:
  Value() : data_(0.0) {}
  Value(double s) : data_(s) {}
  Value(std::vector<double> v) : data_(std::move(v)) {}

  bool is_scalar() const { return std::holds_alternative<double>(data_); }
  bool is_vector() const { return !is_scalar(); }

  double scalar() const { return std::get<double>(data_); }
  const std::vector<double>& vec() const { return std::get<std::vector<double>>(data_); }
  std::vector<double>& vec() { return std::get<std::vector<double>>(data_); }

  size_t size() const { return is_scalar() ? 1 : vec().size(); }
  double at(size_t i) const { return is_scalar() ? scalar() : vec()[i]; }

  bool all_finite() const {
    if (is_scalar()) return std::isfinite(scalar());
    for (double x : vec())
      if (!std::isfinite(x)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    if (is_scalar()) return std::fabs(scalar());
    for (double x : vec()) m = std::max(m, std::fabs(x));
    return m;
  }

  bool operator==(const Value& other) const { return data_ == other.data_; }

 private:
  std::variant<double, std::vector<double>> data_;
};

using Env = std::map<std::string, Value>;

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : EvalError {
  NumericError(std::string op_, std::string reason_)
      : EvalError("numeric error in " + op_ + ": " + reason_),
        op(std::move(op_)),
        reason(std::move(reason_)) {}
  std::string op;
  std::string reason;
};

struct TypeError : EvalError {
  TypeError(std::string expected_, std::string got_)
      : EvalError("type error: expected " + expected_ + ", got " + got_),
        expected(std::move(expected_)),
        got(std::move(got_)) {}
  std::string expected;
  std::string got;
};

struct ArityError : EvalError {
  ArityError(const std::string& fn, size_t expected_min, size_t expected_max, size_t got_)
      : EvalError("arity error: " + fn + " takes " + std::to_string(expected_min) +
                  (expected_max == expected_min ? "" : ".." + (expected_max == SIZE_MAX
                       ? std::string("n") : std::to_string(expected_max))) +
                  " arguments, got " + std::to_string(got_)),
        function(fn),
        got(got_) {}
  std::string function;
  size_t got;
};

struct MissingInput : EvalError {
  explicit MissingInput(const std::string& name_)
      : EvalError("missing input: " + name_), name(name_) {}
  std::string name;
};

}  // namespace evolattice

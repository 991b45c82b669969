#pragma once

#include <stdexcept>
#include <string>

namespace ebv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

// alpha is below the Welch bound for (dim, num); no frame can exist.
class InfeasibleConfig : public Error {
 public:
  InfeasibleConfig(double alpha, double welch_bound);

  double alpha() const noexcept { return alpha_; }
  double welch_bound() const noexcept { return welch_bound_; }

 private:
  double alpha_;
  double welch_bound_;
};

// Zero or near-zero vectors where a direction is required.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class InvalidSelection : public Error {
 public:
  using Error::Error;
};

// File is not a frame file we understand (magic, version, size).
class FormatError : public Error {
 public:
  using Error::Error;
};

// File parses but its payload violates the frame invariants.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ebv

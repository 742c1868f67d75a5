#pragma once

#include <stdexcept>
#include <string>

namespace mastune {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data or configuration violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A named entity (role, model, graph) does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Tensor or graph dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A graph that must be acyclic is not.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Non-finite numbers reached a place that cannot absorb them.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Planted-world calibration could not reach the requested margin.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mastune

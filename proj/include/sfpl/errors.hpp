#pragma once

#include <stdexcept>
#include <string>

namespace sfpl {

// Malformed input: file schema violations, inconsistent shapes, bad options.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Covariate matrix does not have full column rank.
class IdentifiabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical routine could not make progress (e.g. linear solve failure).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sfpl

#pragma once

#include <stdexcept>
#include <string>

namespace hopperlab {

// Argument outside the domain of a kinematic or constitutive law.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Leg Jacobian too close to the full-extension singularity.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double t) : std::runtime_error(what), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

// A hop log that does not contain a complete TD -> CE -> LO cycle.
class TrialMalformedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hopperlab

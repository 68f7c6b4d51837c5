#pragma once

#include <stdexcept>
#include <string>

namespace bolfi {

/// A simulator could not produce a finite data set at the requested parameter.
class SimulationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A matrix that must be positive definite is not (or not after the allowed jitter).
class NotPositiveDefinite : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Gram matrix factorization failed after maximal jitter escalation.
class IllConditioned : public NotPositiveDefinite {
public:
  using NotPositiveDefinite::NotPositiveDefinite;
};

/// Every importance weight vanished.
class DegeneratePosterior : public std::runtime_error {
public:
  DegeneratePosterior(const std::string& what, double max_log_weight)
      : std::runtime_error(what), max_log_weight_(max_log_weight) {}
  double max_log_weight() const { return max_log_weight_; }

private:
  double max_log_weight_;
};

/// A sampler exhausted its simulation cap before reaching its acceptance target.
class BudgetExhausted : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace bolfi

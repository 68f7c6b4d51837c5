#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "bolfi/models.hpp"

namespace bolfi {

/// Sobol low-discrepancy sequence on the unit cube (GSL direction numbers).
/// The all-zeros point is never returned: the first point is (0.5, ..., 0.5).
class SobolSequence {
public:
  static constexpr std::size_t kMaxDims = 40;

  explicit SobolSequence(std::size_t dims);
  ~SobolSequence();
  SobolSequence(SobolSequence&&) noexcept;
  SobolSequence& operator=(SobolSequence&&) noexcept;

  std::size_t dims() const { return dims_; }
  std::vector<double> next();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t dims_;
};

/// First `count` Sobol points scaled into the box.
std::vector<ParamVector> sobol_points(const Box& bounds, std::size_t count);

}  // namespace bolfi

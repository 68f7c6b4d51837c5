#include "bolfi/sobol.hpp"

#include <gsl/gsl_qrng.h>

#include <stdexcept>
#include <string>

namespace bolfi {

struct SobolSequence::Impl {
  gsl_qrng* q = nullptr;
  ~Impl() {
    if (q) gsl_qrng_free(q);
  }
};

SobolSequence::SobolSequence(std::size_t dims) : impl_(std::make_unique<Impl>()), dims_(dims) {
  if (dims == 0 || dims > kMaxDims) {
    throw std::invalid_argument("Sobol sequence supports 1.." + std::to_string(kMaxDims) +
                                " dimensions, got " + std::to_string(dims));
  }
  impl_->q = gsl_qrng_alloc(gsl_qrng_sobol, static_cast<unsigned>(dims));
  if (!impl_->q) throw std::runtime_error("gsl_qrng_alloc failed");
}

SobolSequence::~SobolSequence() = default;
SobolSequence::SobolSequence(SobolSequence&&) noexcept = default;
SobolSequence& SobolSequence::operator=(SobolSequence&&) noexcept = default;

std::vector<double> SobolSequence::next() {
  std::vector<double> u(dims_);
  gsl_qrng_get(impl_->q, u.data());
  return u;
}

std::vector<ParamVector> sobol_points(const Box& bounds, std::size_t count) {
  SobolSequence seq(bounds.dims());
  std::vector<ParamVector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(bounds.from_unit(seq.next()));
  return out;
}

}  // namespace bolfi

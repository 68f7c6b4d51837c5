#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace bolfi {

/// Counter-based random stream (Philox4x32-10).
///
/// A stream is addressed by (master seed, name, index). Two streams with
/// different addresses are statistically independent, and the same address
/// always replays the same sequence, which is what makes every simulation in
/// an experiment individually re-runnable. Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
class Stream {
public:
  using result_type = std::uint64_t;

  Stream() : Stream(0, "default", 0) {}
  Stream(std::uint64_t master_seed, std::string_view name, std::uint64_t index = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Child stream addressed relative to this stream's key.
  Stream child(std::string_view name, std::uint64_t index = 0) const;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  std::uint64_t key() const { return key_; }
  std::uint64_t index() const { return index_; }

private:
  Stream(std::uint64_t key, std::uint64_t index, int) : key_(key), index_(index) {}
  void refill();

  std::uint64_t key_;
  std::uint64_t index_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int cursor_ = 4;
};

/// Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t hash_name(std::string_view name);

}  // namespace bolfi

#pragma once
// Counter-based random number generation with explicit stream separation.
//
// Reproducibility across platforms and across worker counts requires that
// every replica draw from its own deterministic stream, independent of
// scheduling order.  We use Philox4x32-10 keyed by the master seed, with the
// 128-bit counter split as (block_lo, block_hi, replica, role): distinct
// (replica, role) pairs index disjoint counter ranges and therefore produce
// independent streams without any shared state.
//
// The standard-library distributions are implementation-defined, so uniform,
// exponential, Poisson and discrete sampling are implemented here from raw
// bits.

#include <array>
#include <cstdint>
#include <vector>

namespace fm::rng {

// One Philox4x32-10 block: 4 output words from a 128-bit counter and a
// 64-bit key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

// Stream roles.  Restart streams (one per averaging block) are tagged with
// the high bit so they can never collide with the enumerated roles.
namespace role {
inline constexpr std::uint32_t fast = 0;      // fast driver path
inline constexpr std::uint32_t slow = 1;      // slow driver path
inline constexpr std::uint32_t bootstrap = 2; // resampling indices
inline constexpr std::uint32_t params = 3;    // randomized test parameters
inline constexpr std::uint32_t restart(std::uint32_t n) {
  return 0x80000000u | n;
}
} // namespace role

class RngStream {
public:
  RngStream(std::uint64_t master_seed, std::uint32_t replica,
            std::uint32_t role_id);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on the open interval (0,1); never returns an endpoint, so logs
  // and inverse CDFs are always safe.
  double u01();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi);

  // Exponential with the given rate (mean 1/rate).
  double exponential(double rate);

  // Exact Poisson sampling via products of uniforms, chunked so that the
  // e^{-mean} threshold never underflows; exactness follows from additivity
  // of independent Poisson counts.
  std::uint64_t poisson(double mean);

  std::uint64_t seed() const { return seed_; }

private:
  std::uint64_t seed_;
  std::array<std::uint32_t, 2> key_;
  std::uint32_t replica_, role_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4; // buffered words already consumed
};

// Walker/Vose alias table for O(1) sampling from a fixed discrete
// distribution.  Construction is deterministic (stable two-stack method).
class AliasTable {
public:
  explicit AliasTable(const std::vector<double>& weights);
  std::size_t sample(RngStream& g) const;
  std::size_t size() const { return prob_.size(); }

private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

} // namespace fm::rng

#include "fm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fm::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

} // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> x,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, x[0], hi0, lo0);
    mulhilo(kMul1, x[2], hi1, lo1);
    x = {hi1 ^ x[1] ^ key[0], lo1, hi0 ^ x[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return x;
}

RngStream::RngStream(std::uint64_t master_seed, std::uint32_t replica,
                     std::uint32_t role_id)
    : seed_(master_seed),
      key_{static_cast<std::uint32_t>(master_seed),
           static_cast<std::uint32_t>(master_seed >> 32)},
      replica_(replica), role_(role_id) {}

std::uint32_t RngStream::next_u32() {
  if (pos_ == 4) {
    buf_ = philox4x32({static_cast<std::uint32_t>(block_),
                       static_cast<std::uint32_t>(block_ >> 32), replica_,
                       role_},
                      key_);
    ++block_;
    pos_ = 0;
  }
  return buf_[pos_++];
}

std::uint64_t RngStream::next_u64() {
  std::uint64_t lo = next_u32();
  std::uint64_t hi = next_u32();
  return lo | (hi << 32);
}

double RngStream::u01() {
  // 52 random bits centered in the cell: value in (0,1), endpoints excluded
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * u01();
}

double RngStream::exponential(double rate) {
  if (!(rate > 0)) throw std::invalid_argument("exponential: rate must be > 0");
  return -std::log(u01()) / rate;
}

std::uint64_t RngStream::poisson(double mean) {
  if (mean < 0) throw std::invalid_argument("poisson: mean must be >= 0");
  if (mean == 0) return 0;
  // Split the mean into chunks small enough that e^{-chunk} stays well away
  // from the double underflow threshold; counts add across chunks.
  constexpr double kChunk = 256.0;
  std::uint64_t total = 0;
  double remaining = mean;
  while (remaining > 0) {
    double m = remaining > kChunk ? kChunk : remaining;
    remaining -= m;
    double threshold = std::exp(-m);
    double prod = 1.0;
    std::uint64_t count = 0;
    for (;;) {
      prod *= u01();
      if (prod <= threshold) break;
      ++count;
    }
    total += count;
  }
  return total;
}

AliasTable::AliasTable(const std::vector<double>& weights) {
  const std::size_t n = weights.size();
  if (n == 0) throw std::invalid_argument("alias table: empty weights");
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw std::invalid_argument("alias table: negative weight");
    total += w;
  }
  if (!(total > 0)) throw std::invalid_argument("alias table: zero total mass");
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] * n / total;
  // two-stack method; stable because indices are pushed in increasing order
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < n; ++i)
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  while (!small.empty() && !large.empty()) {
    std::uint32_t s = small.back(), l = large.back();
    small.pop_back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (std::uint32_t i : large) prob_[i] = 1.0;
  for (std::uint32_t i : small) prob_[i] = 1.0; // numerical leftovers
}

std::size_t AliasTable::sample(RngStream& g) const {
  const std::size_t n = prob_.size();
  // modulo bias is n / 2^64, far below anything observable
  std::size_t col = static_cast<std::size_t>(g.next_u64() % n);
  return g.u01() < prob_[col] ? col : alias_[col];
}

} // namespace fm::rng

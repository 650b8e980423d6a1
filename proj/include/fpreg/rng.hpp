#pragma once
// Counter-based generator (Philox 4x32, 10 rounds). Output depends only on
// (seed, stream, position), so replication r of a simulation reads stream r
// and sees the same numbers no matter how work is scheduled across threads.
#include <array>
#include <bit>
#include <cstdint>
#include <vector>

namespace fpreg {

// One Philox 4x32 block at 10 rounds, exposed for known-answer tests.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                               std::array<std::uint32_t, 2> key) {
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = 0xD2511F53ull * c[0];
    const std::uint64_t p1 = 0xCD9E8D57ull * c[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return c;
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) {
    key_ = {static_cast<std::uint32_t>(seed),
            static_cast<std::uint32_t>(seed >> 32)};
    ctr_ = {0u, 0u, static_cast<std::uint32_t>(stream),
            static_cast<std::uint32_t>(stream >> 32)};
  }

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t lo = next_u32();
    return lo | (static_cast<std::uint64_t>(next_u32()) << 32);
  }

  // uniform on [0,1) with 53 random bits
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform on {0, ..., bound-1}; rejection against a power of two keeps it exact
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t mask = ~std::uint64_t{0} >> std::countl_zero(bound - 1);
    for (;;) {
      const std::uint64_t v = next_u64() & mask;
      if (v < bound) return v;
    }
  }

  bool bernoulli(double p) { return next_double() < p; }

  // index draw from (possibly unnormalized up to 1e-12) weights
  int discrete(const double* probs, int m) {
    const double u = next_double();
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
      acc += probs[j];
      if (u < acc) return j;
    }
    return m - 1;  // u landed in the normalization slack
  }

 private:
  void refill() {
    buf_ = philox4x32(ctr_, key_);
    pos_ = 0;
    if (++ctr_[0] == 0) ++ctr_[1];  // 64-bit block counter
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

// k distinct units out of n as a 0/1 mask, via partial Fisher-Yates.
inline std::vector<std::uint8_t> sample_mask(long long n, long long k,
                                             CounterRng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
  for (long long i = 0; i < k; ++i) {
    const long long j = i + static_cast<long long>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
  }
  return mask;
}

}  // namespace fpreg

#pragma once

#include <cstdint>
#include <string_view>

namespace vpoc::rng {

// SplitMix64 step. Used for seeding and for stateless hashing; the output is
// a bijection of the input, so distinct inputs never collide.
std::uint64_t splitmix64(std::uint64_t& state);

// Stateless hash of a single value (runs splitmix64 once).
std::uint64_t hash64(std::uint64_t x);

// Order-sensitive combination of two hashes.
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

// FNV-1a over the bytes of a string, for naming substreams.
std::uint64_t hash_string(std::string_view s);

// Seed for the substream `name[index]` of the stream rooted at `root`.
// Distinct (root, name, index) triples give independent-looking seeds, so
// modules can draw from private streams without coordinating.
std::uint64_t derive(std::uint64_t root, std::string_view name,
                     std::uint64_t index = 0);

// xoshiro256++ with hand-rolled distributions. std::mt19937_64 would do, but
// the standard distributions are not bit-reproducible across standard
// libraries; everything downstream needs byte-identical reruns, so the
// mapping from raw bits to samples lives here.
class Stream {
 public:
  explicit Stream(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer on [lo, hi], both ends inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller. Generates pairs; the spare is cached.
  double normal();

  // true with probability p.
  bool bernoulli(double p);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vpoc::rng

#pragma once

// Seed derivation for reproducible, order-independent random streams.
//
//   replica_seed(master, r) = splitmix64(master + (r + 1) * 0x9E3779B97F4A7C15)
//   stream_seed(seed, s)    = splitmix64(seed ^ splitmix64(s + 0xD1B54A32D192ED03))
//
// Each stream feeds its own std::mt19937_64.

#include <cstdint>
#include <random>

namespace oumix::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t replica_seed(std::uint64_t master, std::uint64_t replica) {
  return splitmix64(master + (replica + 1) * 0x9E3779B97F4A7C15ull);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0xD1B54A32D192ED03ull));
}

/// One independent Gaussian stream.
class NormalStream {
public:
  NormalStream() = default;
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return dist_(engine_); }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

} // namespace oumix::rng

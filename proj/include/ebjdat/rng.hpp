#ifndef EBJDAT_RNG_HPP_
#define EBJDAT_RNG_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ebjdat {

// mt19937_64 with distribution code kept in-house so draws are identical
// across standard libraries and the full state round-trips through a
// checkpoint (no cached second normal variate).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Seed from several keys, e.g. (seed, epoch).
  static Rng keyed(std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; always consumes two words.
  double normal();

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ebjdat

#endif  // EBJDAT_RNG_HPP_

#pragma once

// Seeded randomness. All stochastic components draw from named streams split
// off one root seed, so data generation, parameter init, and shuffling are
// independently reproducible. Integer/real mappings are hand-rolled on top
// of mt19937_64 rather than <random> distributions, whose output is
// implementation-defined.

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace beamstop {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // [0, 1)
  double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

  // [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [lo, hi] inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(eng_() % span);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

// Splits one root seed into independent named streams.
class SeedSplitter {
 public:
  explicit SeedSplitter(std::uint64_t root) : root_(root) {}

  std::uint64_t seed_for(std::string_view name) const {
    // FNV-1a over the stream name, mixed with the root seed
    std::uint64_t h = 14695981039346656037ull;
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h ^= root_ + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
  }

  Rng stream(std::string_view name) const { return Rng(seed_for(name)); }

 private:
  std::uint64_t root_;
};

}  // namespace beamstop

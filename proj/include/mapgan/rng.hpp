#ifndef MAPGAN_RNG_HPP_
#define MAPGAN_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mapgan {

// Deterministic random source. Every stochastic decision in the library
// (weight init, dropout masks, shuffling) draws from one of these, so a
// serialized engine state captures the full randomness of a run.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0)
      : engine_(static_cast<std::mt19937::result_type>(seed)) {}

  // uniform in [0, 1), 24-bit resolution
  float uniform() {
    return static_cast<float>(engine_() >> 8) * (1.0f / 16777216.0f);
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, one fresh pair of draws per sample (no cached spare,
  // which keeps the serialized state self-contained)
  float normal(float mean = 0.0f, float stddev = 1.0f) {
    float u1 = 1.0f - uniform();  // (0, 1]
    float u2 = uniform();
    float r = std::sqrt(-2.0f * std::log(u1));
    return mean + stddev * r * std::cos(6.28318530717958647692f * u2);
  }

  // integer in [0, n)
  uint64_t below(uint64_t n) {
    uint64_t hi = engine_();
    uint64_t lo = engine_();
    return ((hi << 32) | lo) % n;
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw std::runtime_error("Rng::restore: malformed state string");
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937 engine_;
};

// Derives an independent stream seed, used for per-epoch shuffle orders so
// that resuming mid-run does not depend on how many draws the main stream
// has consumed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace mapgan

#endif  // MAPGAN_RNG_HPP_

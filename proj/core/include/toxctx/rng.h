#ifndef TOXCTX_RNG_H_
#define TOXCTX_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

namespace toxctx {

// Mixes a base seed with a list of stream identifiers (splitmix64 chain).
// Used to give every run, epoch and sequence its own reproducible stream.
std::uint64_t DeriveSeed(std::uint64_t base,
                         std::initializer_list<std::uint64_t> stream);

// Portable random source. The std distributions are implementation-defined,
// so every draw here is computed from raw mt19937_64 output to keep corpora
// and training runs identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of precision.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer on [0, n). n must be > 0.
  std::uint64_t UniformInt(std::uint64_t n);

  // Uniform integer on [lo, hi].
  int UniformRange(int lo, int hi) {
    return lo + static_cast<int>(
                    UniformInt(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  double Normal();

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(UniformInt(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace toxctx

#endif  // TOXCTX_RNG_H_

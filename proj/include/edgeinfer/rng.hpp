#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace edgeinfer {

// splitmix64, used to derive independent stream seeds from a master seed.
// The algorithm is fixed here so seed derivation never changes between builds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for a sub-stream identified by up to three indices. Streams derived
// from the same master with different indices are independent for our
// purposes; the chain of splitmix64 calls is documented in the README.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(master ^ 0x6a09e667f3bcc909ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  return s;
}

// Deterministic random stream. mt19937_64 is fully specified by the C++
// standard, and the uniform/normal transforms below are implemented by hand,
// so sequences are bit-identical across compilers and platforms.
// std::*_distribution is avoided on purpose (implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (both values used, cached).
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Avoid log(0).
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Circularly-symmetric complex Gaussian CN(0, 1): variance 1/2 per part.
  std::complex<double> cgauss() {
    double re = gauss();
    double im = gauss();
    return {re * M_SQRT1_2, im * M_SQRT1_2};
  }

  // Uniform phase in [0, 2pi).
  double phase() { return uniform() * 2.0 * M_PI; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace edgeinfer

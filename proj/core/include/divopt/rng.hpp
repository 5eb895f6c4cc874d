#pragma once

#include <cmath>
#include <cstdint>

namespace divopt {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// xoshiro256++ seeded through splitmix64. `stream` picks an independent
/// substream so per-path draws are identical no matter how paths are
/// scheduled.
class Xoshiro256pp {
 public:
  Xoshiro256pp(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t sm = seed ^ (0x9E3779B97F4A7C15ull * (stream + 1));
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

/// Marsaglia-Tsang ziggurat for the standard normal, 128 layers, 64-bit
/// integer fast path.
class ZigguratNormal {
 public:
  ZigguratNormal() { init(); }

  template <class Rng>
  double operator()(Rng& rng) {
    for (;;) {
      const std::uint64_t bits = rng.next();
      const std::int64_t hz = static_cast<std::int64_t>(bits);
      const unsigned iz = static_cast<unsigned>(bits & 127u);
      const std::uint64_t mag =
          hz >= 0 ? static_cast<std::uint64_t>(hz) : 0ull - static_cast<std::uint64_t>(hz);
      if (mag < kn_[iz]) return static_cast<double>(hz) * wn_[iz];

      if (iz == 0) {
        // tail beyond r
        double x, y;
        do {
          x = -std::log(rng.uniform() + 1e-300) * kInvR;
          y = -std::log(rng.uniform() + 1e-300);
        } while (y + y < x * x);
        return hz >= 0 ? kR + x : -kR - x;
      }
      const double x = static_cast<double>(hz) * wn_[iz];
      if (fn_[iz] + rng.uniform() * (fn_[iz - 1] - fn_[iz]) < std::exp(-0.5 * x * x)) return x;
    }
  }

 private:
  static constexpr double kR = 3.442619855899;
  static constexpr double kInvR = 1.0 / kR;
  static constexpr double kV = 9.91256303526217e-3;
  static constexpr double kM = 9223372036854775808.0;  // 2^63

  void init() {
    double dn = kR, tn = kR;
    const double q = kV / std::exp(-0.5 * dn * dn);
    kn_[0] = static_cast<std::uint64_t>((dn / q) * kM);
    kn_[1] = 0;
    wn_[0] = q / kM;
    wn_[127] = dn / kM;
    fn_[0] = 1.0;
    fn_[127] = std::exp(-0.5 * dn * dn);
    for (int i = 126; i >= 1; --i) {
      dn = std::sqrt(-2.0 * std::log(kV / dn + std::exp(-0.5 * dn * dn)));
      kn_[i + 1] = static_cast<std::uint64_t>((dn / tn) * kM);
      tn = dn;
      fn_[i] = std::exp(-0.5 * dn * dn);
      wn_[i] = dn / kM;
    }
  }

  std::uint64_t kn_[128];
  double wn_[128];
  double fn_[128];
};

}  // namespace divopt

#ifndef MPSE_RNG_HPP
#define MPSE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "mpse/matrix_ops.hpp"

namespace mpse {

// splitmix64 finalizer; used to derive independent substream seeds from
// (master seed, role, party, run) without any stream overlap in practice.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t role,
                                 std::uint64_t party = 0, std::uint64_t run = 0) {
  std::uint64_t z = mix64(seed);
  z = mix64(z ^ mix64(role * 0x100000001b3ULL + 0xcbf29ce484222325ULL));
  z = mix64(z ^ mix64(party + 0x517cc1b727220a95ULL));
  z = mix64(z ^ mix64(run + 0x2545f4914f6cdd1dULL));
  return z;
}

namespace stream_role {
inline constexpr std::uint64_t process = 1;
inline constexpr std::uint64_t party = 2;
inline constexpr std::uint64_t init_state = 3;
inline constexpr std::uint64_t init_estimate = 4;
inline constexpr std::uint64_t crypto = 5;
}  // namespace stream_role

/// Deterministic stream of standard normals. Box-Muller over explicit
/// 53-bit uniforms so sequences are identical across standard libraries
/// (std::normal_distribution is implementation-defined).
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : gen_(seed) {}

  double uniform01() {
    // (0,1]: never returns 0, so log() below is safe
    return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  std::uint64_t raw64() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mpse

#endif  // MPSE_RNG_HPP

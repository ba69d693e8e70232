#pragma once

#include <cmath>
#include <cstdint>

namespace conflow {

// Counter-based RNG stream. A draw is a pure function of
// (root_seed, stream_id, counter), so streams can be split across samples
// and threads without coordination and stay bitwise reproducible.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::uint64_t stream_id)
      : root_seed_(root_seed), stream_id_(stream_id), counter_(0) {}

  std::uint64_t root_seed() const { return root_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() {
    std::uint64_t x = mix(root_seed_ ^ 0x9e3779b97f4a7c15ULL);
    x = mix(x ^ stream_id_);
    x = mix(x ^ counter_++);
    return x;
  }

  // uniform on (0,1); never returns exactly 0 or 1
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Box-Muller; consumes two uniforms per normal
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Student-t with integer df, built from normals (t = z / sqrt(chi2/df))
  double student_t(int df) {
    double z = normal();
    double chi2 = 0.0;
    for (int i = 0; i < df; ++i) {
      double g = normal();
      chi2 += g * g;
    }
    return z / std::sqrt(chi2 / df);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t root_seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_;
};

}  // namespace conflow

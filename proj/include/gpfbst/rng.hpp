// Seeded normal sampler with a fully pinned-down draw sequence.
//
// std::normal_distribution is implementation-defined, which breaks the
// byte-identical-rerun guarantee across standard libraries, so the Box-Muller
// transform is spelled out here over the (fully specified) mt19937_64 stream.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gpfbst {

class NormalSampler {
  public:
    explicit NormalSampler(std::uint64_t seed) : gen_(seed) {}

    // Uniform on (0, 1]: 53-bit mantissa, never exactly zero.
    double uniform() { return 1.0 - static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal draw; Box-Muller pairs, one cached.
    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * M_PI * uniform();
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace gpfbst

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace styleforge {

// Deterministic RNG used everywhere instead of std distributions, whose
// output is implementation-defined. Same seed, same stream, on every
// platform and standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform double in [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller, one spare cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2     = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double theta  = 2.0 * 3.14159265358979323846 * u2;
        spare_        = radius * std::sin(theta);
        has_spare_    = true;
        return radius * std::cos(theta);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

    // uniform integer in [0, n), rejection sampled
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) {
            return 0;
        }
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double spare_     = 0.0;
    bool has_spare_   = false;
};

}  // namespace styleforge

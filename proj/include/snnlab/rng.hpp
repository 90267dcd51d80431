#ifndef SNNLAB_RNG_HPP
#define SNNLAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace snnlab::rng {

// splitmix64 step; the generator behind all sampling in this project.
// Chosen over std:: distributions because the standard leaves their
// output unspecified, and every result here must be bit-reproducible.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent task seed from a master seed and task coordinates.
// Used to hand out per-replicate / per-index streams so that results do not
// depend on execution order.
inline std::uint64_t derive(std::uint64_t master, std::initializer_list<std::uint64_t> coords) {
    std::uint64_t s = master ^ 0xd6e8feb86659fd93ULL;
    for (std::uint64_t c : coords) {
        s ^= c + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        splitmix64(s);
        s ^= splitmix64(s);
    }
    return s;
}

// A small deterministic stream of uniforms / normals.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1), 53 bits
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller; one spare cached per pair
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace snnlab::rng

#endif  // SNNLAB_RNG_HPP

#include "stu/rng.hpp"

#include <cmath>
#include <numbers>

namespace stu {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0)
        u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double Rng::lognormal(double log_sigma, double scale) {
    return scale * std::exp(log_sigma * normal());
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0)
        return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return v % n;
}

long Rng::poisson(double lambda) {
    long count = 0;
    // Rates above ~700 underflow exp(-lambda); split into independent chunks.
    while (lambda > 0) {
        const double chunk = std::min(lambda, 500.0);
        const double limit = std::exp(-chunk);
        double product = uniform();
        long k = 0;
        while (product > limit) {
            ++k;
            product *= uniform();
        }
        count += k;
        lambda -= chunk;
    }
    return count;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = splitmix64(root ^ fnv1a(tag));
    h = splitmix64(h ^ splitmix64(a));
    h = splitmix64(h ^ splitmix64(b + 0x517cc1b727220a95ULL));
    return h;
}

} // namespace stu

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace stu {

// Deterministic random stream. Standard-library *distributions* are
// implementation-defined, so the transforms live here: the same seed gives
// the same draws on every platform and in every build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller, second draw cached.
    double normal();

    double lognormal(double log_sigma, double scale);

    // Uniform integer in [0, n), rejection sampled (no modulo bias).
    std::uint64_t below(std::uint64_t n);

    // Knuth multiplication method; adequate for the moderate rates used here.
    long poisson(double lambda);

    // Fisher-Yates.
    template <typename T> void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0;
    bool has_spare_ = false;
};

// Stable per-entity seed derivation: mixing a root seed with a tag and up to
// two indices, so regenerating one entity is unaffected by count changes
// elsewhere.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t a = 0,
                          std::uint64_t b = 0);

} // namespace stu

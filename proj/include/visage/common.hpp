#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace visage {

// Error taxonomy. The CLI maps these onto process exit codes:
// bad input / malformed file -> 2, numeric failure -> 3, artifact load -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct DegenerateInput : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct ArtifactError : Error {
    using Error::Error;
};

// Deterministic PRNG. mt19937_64 is bit-stable across platforms; the
// distribution transforms are hand-rolled because the std:: distributions
// are implementation-defined and would break seed-for-seed reproducibility
// between standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Uniform integer in [0, n) by 128-bit scaling; avoids modulo bias.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Derived stream with a decorrelated seed.
    Rng fork(std::uint64_t stream) {
        std::uint64_t z = next_u64() + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline bool is_finite(double v) { return std::isfinite(v); }

}  // namespace visage

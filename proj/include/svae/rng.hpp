#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace svae {

/// Seeded random source whose streams are identical on every platform.
///
/// The engine (mt19937_64) is fully specified by the standard, but the
/// standard distributions are not, so the uniform, normal and integer
/// draws are derived here from raw engine output.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Independent stream keyed by (seed, a, b, c); used to give every sample
    /// of a sweep its own reproducible noise regardless of visiting order.
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

    /// Uniform on [0, 1).
    double uniform();
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    void fill_normal(std::span<double> out, double sigma = 1.0);
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace svae

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace fundus {

/// Deterministic random stream. Every stochastic component owns its own
/// stream derived from (run seed, stream tag) so components never perturb
/// each other's draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
    long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(gen_); }

    template <class It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, gen_);
    }

    std::mt19937_64& engine() { return gen_; }

    /// splitmix64 finalizer; mixes a seed with a stream tag.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace fundus

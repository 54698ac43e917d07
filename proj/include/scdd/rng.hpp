#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace scdd {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits; identical across standard libraries.
double uniform01(Rng& rng);

// Uniform integer in [0, n).
int uniform_index(Rng& rng, int n);

// Inverse-CDF draw from unnormalized-safe probabilities in fp64. Never returns
// an index with zero probability.
int draw_categorical(std::span<const double> probs, Rng& rng);

// Seed for an independent child stream.
std::uint64_t split_seed(Rng& rng);

} // namespace scdd

#include "scdd/rng.hpp"

namespace scdd {

double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int uniform_index(Rng& rng, int n) {
    const int i = static_cast<int>(uniform01(rng) * n);
    return i < n ? i : n - 1;
}

int draw_categorical(std::span<const double> probs, Rng& rng) {
    double total = 0.0;
    int last = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        total += probs[i];
        if (probs[i] > 0.0) {
            last = static_cast<int>(i);
        }
    }
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) {
            continue;
        }
        acc += probs[i];
        if (u < acc) {
            return static_cast<int>(i);
        }
    }
    return last;
}

std::uint64_t split_seed(Rng& rng) {
    return rng();
}

} // namespace scdd

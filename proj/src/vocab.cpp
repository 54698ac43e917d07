#include "scdd/vocab.hpp"

#include "scdd/error.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace scdd {

Vocab::Vocab(int K) : k_(K) {
    if (K < 1) {
        throw InvalidArgument("vocabulary needs at least one non-mask token, got K=" + std::to_string(K));
    }
}

void Vocab::check_token(Token v) const {
    if (!contains(v)) {
        throw InvalidArgument("token " + std::to_string(v) + " outside vocabulary of size " + std::to_string(size()));
    }
}

void Vocab::check_clean(Token x) const {
    check_token(x);
    if (is_mask(x)) {
        throw InvalidArgument("clean token expected, got the mask token");
    }
}

TokenDist TokenDist::zeros(const Vocab& vocab) {
    return TokenDist(std::vector<double>(static_cast<std::size_t>(vocab.size()), 0.0));
}

TokenDist TokenDist::one_hot(const Vocab& vocab, Token v) {
    vocab.check_token(v);
    TokenDist d = zeros(vocab);
    d[static_cast<std::size_t>(v)] = 1.0;
    return d;
}

TokenDist TokenDist::uniform_clean(const Vocab& vocab) {
    TokenDist d = zeros(vocab);
    for (int v = 0; v < vocab.K(); ++v) {
        d[static_cast<std::size_t>(v)] = 1.0 / vocab.K();
    }
    return d;
}

double TokenDist::sum() const {
    return std::accumulate(probs.begin(), probs.end(), 0.0);
}

bool is_simplex(std::span<const double> p, double tol) {
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            return false;
        }
        total += v;
    }
    return std::abs(total - 1.0) <= tol;
}

} // namespace scdd

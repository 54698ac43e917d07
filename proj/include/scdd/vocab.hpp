#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace scdd {

using Token = int;

// K non-mask tokens 0..K-1; index K is the mask.
class Vocab {
public:
    explicit Vocab(int K);

    int K() const { return k_; }
    int size() const { return k_ + 1; }
    Token mask() const { return k_; }
    bool is_mask(Token v) const { return v == k_; }
    bool contains(Token v) const { return v >= 0 && v <= k_; }

    void check_token(Token v) const;
    void check_clean(Token x) const;

    bool operator==(const Vocab&) const = default;

private:
    int k_;
};

// Probability vector over the K+1 tokens (mask included).
struct TokenDist {
    std::vector<double> probs;

    TokenDist() = default;
    explicit TokenDist(std::vector<double> p) : probs(std::move(p)) {}

    static TokenDist zeros(const Vocab& vocab);
    static TokenDist one_hot(const Vocab& vocab, Token v);
    // Uniform over the non-mask tokens, zero on mask.
    static TokenDist uniform_clean(const Vocab& vocab);

    std::size_t size() const { return probs.size(); }
    double& operator[](std::size_t i) { return probs[i]; }
    double operator[](std::size_t i) const { return probs[i]; }
    double sum() const;
    std::span<const double> view() const { return probs; }
};

// Entries non-negative and summing to one within tol.
bool is_simplex(std::span<const double> p, double tol = 1e-12);

} // namespace scdd

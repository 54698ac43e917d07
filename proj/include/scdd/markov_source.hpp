#pragma once

#include "scdd/rng.hpp"
#include "scdd/vocab.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace scdd {

// First-order Markov chain over the K non-mask tokens.
struct MarkovSource {
    int K = 0;
    std::vector<double> init;               // K
    std::vector<std::vector<double>> trans; // K x K, row-stochastic
    double entropy_rate = 0.0;              // nats per token under the stationary law

    // Zipf base distribution z_i ∝ (i+1)^-zipf with trans = (1-stickiness) 1 z^T + stickiness I.
    // z is stationary and is also used as the initial law.
    static MarkovSource sticky(int K, double zipf, double stickiness);
    static MarkovSource uniform(int K);
    // Emits `token` forever.
    static MarkovSource constant(int K, Token token);
    static MarkovSource from_matrices(std::vector<double> init, std::vector<std::vector<double>> trans);
    // Whitespace-separated: K, then K initial probabilities, then K*K transition entries.
    static MarkovSource from_file(const std::filesystem::path& path);

    // Throws InvalidArgument unless init and every row are simplices within 1e-12.
    void validate() const;
    std::vector<double> stationary() const;
    // H(X_1..X_L) / L in nats.
    double sequence_entropy(int L) const;
};

std::vector<std::vector<Token>> generate_corpus(const MarkovSource& source, int L, int count, Rng& rng);

// exp(-mean per-token log-probability); +inf if any sequence has probability zero.
double exact_oracle_ppl(const MarkovSource& source, std::span<const std::vector<Token>> sequences);

// -sum p ln p of the empirical token frequencies.
double unigram_entropy(std::span<const std::vector<Token>> sequences, int K);

} // namespace scdd

#pragma once

#include "scdd/denoiser.hpp"
#include "scdd/rng.hpp"
#include "scdd/schedule.hpp"
#include "scdd/vocab.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace testing {

inline scdd::SchedulePoint point(double t, double rho, double gamma) {
    scdd::SchedulePoint p;
    p.t = t;
    p.rho = rho;
    p.gamma = gamma;
    return p;
}

inline scdd::SchedulePoint point(double t, double rho, double gamma, double drho, double dgamma) {
    scdd::SchedulePoint p = point(t, rho, gamma);
    p.rho_prime = drho;
    p.gamma_prime = dgamma;
    return p;
}

inline scdd::TokenDist dist(std::vector<double> p) {
    return scdd::TokenDist(std::move(p));
}

inline scdd::TokenDist random_simplex(const scdd::Vocab& vocab, scdd::Rng& rng) {
    scdd::TokenDist p = scdd::TokenDist::zeros(vocab);
    double total = 0.0;
    for (int v = 0; v < vocab.K(); ++v) {
        p[v] = -std::log(1.0 - scdd::uniform01(rng));
        total += p[v];
    }
    for (int v = 0; v < vocab.K(); ++v) {
        p[v] /= total;
    }
    return p;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(a[i] - b[i]));
    }
    return d;
}

// Returns the same predictor row regardless of input.
class FixedDenoiser final : public scdd::Denoiser {
public:
    FixedDenoiser(int K, scdd::TokenDist row) : vocab_(K), row_(std::move(row)) {}
    const scdd::Vocab& vocab() const override { return vocab_; }
    std::vector<scdd::TokenDist> denoise(std::span<const scdd::Token> z, double) const override {
        return std::vector<scdd::TokenDist>(z.size(), row_);
    }

private:
    scdd::Vocab vocab_;
    scdd::TokenDist row_;
};

} // namespace testing

#pragma once

#include "scdd/denoiser.hpp"
#include "scdd/rng.hpp"
#include "scdd/schedule.hpp"
#include "scdd/vocab.hpp"

#include <span>
#include <vector>

namespace scdd {

// Components of the negative ELBO, in nats.
struct LossBreakdown {
    double reconstruction = 0.0;
    double prior = 0.0; // the all-mask prior matches q(z_1 | x) exactly
    double diffusion = 0.0;
    double total = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o);
    LossBreakdown scaled(double f) const;
};

// Training drops the theta-independent constants of each KL term; Bound keeps the
// full KL so the result is a true upper bound on -log p_theta(x).
enum class NelboForm { Bound, Training };

// Single-draw integrand of the discrete diffusion loss for one position, including the
// factor T, up to theta-independent constants. If `dpredictor` is non-empty it receives
// the gradient with respect to the predictor probabilities (size K+1).
// Returns +infinity (with a warning) when a needed predictor entry is exactly zero and
// there is no smoothing (rho_s = 1).
double diffusion_term_discrete(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                               const TokenDist& predictor, int T, const Vocab& vocab,
                               std::span<double> dpredictor = {});

// T * KL(q(z_s | z_t, x) || p_theta(z_s | z_t)).
double diffusion_kl_discrete(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                             const TokenDist& predictor, int T, const Vocab& vocab);

// Continuous-time integrand at an interior point with derivatives.
double diffusion_term_continuous(const SchedulePoint& point, Token z_t, Token x, const TokenDist& predictor,
                                 const Vocab& vocab);

// -log p_theta(x | z_0), optionally with its predictor gradient.
double reconstruction_term(const SchedulePoint& point_0, Token z_0, Token x, const TokenDist& predictor,
                           const Vocab& vocab, std::span<double> dpredictor = {});

// One Monte-Carlo corruption of a sequence: a grid step i in 1..T with z_{t_i}, and
// z_{t_0} for the reconstruction term (left empty when the grid is clean at t_0).
struct Corruption {
    int step = 1;
    std::vector<Token> z_t;
    std::vector<Token> z_0;
};

Corruption draw_corruption(const TimeGrid& grid, std::span<const Token> x_seq, const Vocab& vocab, Rng& rng);

// Sequence loss (sum over positions) for a fixed corruption.
LossBreakdown evaluate_corruption(const Denoiser& denoiser, const TimeGrid& grid, std::span<const Token> x_seq,
                                  const Corruption& corruption, NelboForm form);

// Monte-Carlo estimate of the sequence NELBO averaged over `num_mc` draws, one
// diffusion time per sequence per draw.
LossBreakdown sequence_nelbo(const Denoiser& denoiser, const TimeGrid& grid, std::span<const Token> x_seq,
                             int num_mc, Rng& rng, NelboForm form = NelboForm::Bound);

// exp of the mean per-token NELBO (Bound form) over the corpus.
double validation_perplexity(const Denoiser& denoiser, const TimeGrid& grid,
                             std::span<const std::vector<Token>> corpus, int num_mc, Rng& rng);

} // namespace scdd

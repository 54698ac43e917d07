#pragma once

#include "scdd/rng.hpp"
#include "scdd/schedule.hpp"
#include "scdd/vocab.hpp"

#include <span>
#include <vector>

namespace scdd {

// Which mixture component produced a corrupted token. Latent; never shown to the denoiser.
enum class ChannelTag { Retain, Uniform, Masked };

// q(z_t | x) = gamma (rho x + (1 - rho) u) + (1 - gamma) m.
TokenDist marginal(const SchedulePoint& point, Token x, const Vocab& vocab);

// Absorbing forward kernel q(z_t | z_s) for any s < t on a monotone schedule.
// Ratios rho_t/rho_s and gamma_t/gamma_s are taken as 0 when the denominator is 0.
TokenDist kernel(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_s, const Vocab& vocab);

struct ForwardSample {
    std::vector<Token> z;
    std::vector<ChannelTag> tags;
};

// Corrupts every position independently from the marginal at `point`.
ForwardSample sample_forward(std::span<const Token> x_seq, const SchedulePoint& point, const Vocab& vocab,
                             Rng& rng);

// Row z_s of the forward generator R_t. Requires an interior point with derivatives.
std::vector<double> forward_rate(const SchedulePoint& point, Token z_s, const Vocab& vocab);

} // namespace scdd

#pragma once

#include "scdd/denoiser.hpp"
#include "scdd/objective.hpp"
#include "scdd/rng.hpp"
#include "scdd/schedule.hpp"
#include "scdd/vocab.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace scdd {

// Bayes posterior by enumeration: kernel(s -> t)[z_t] * marginal(s, x) over z_s, renormalized.
// Throws NullEvent when z_t has zero probability given x.
TokenDist brute_posterior(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                          const Vocab& vocab);

using StochasticMatrix = std::vector<std::vector<double>>;

// Backward matrices M_i[z_t][z_s] for i = T..1 from a denoiser evaluated on length-1 inputs.
std::vector<StochasticMatrix> single_token_backward_matrices(const Denoiser& denoiser, const TimeGrid& grid);
// R[z_0][x] = p_theta(x | z_0).
StochasticMatrix single_token_reconstruction_matrix(const Denoiser& denoiser, const TimeGrid& grid);

// -ln( e_mask^T M_T ... M_1 R e_x ). Throws InvalidArgument on a non-stochastic matrix.
double exact_single_token_nll(std::span<const StochasticMatrix> backward_matrices,
                              const StochasticMatrix& reconstruction_matrix, Token x, const Vocab& vocab);

// NELBO of a single token by exhaustive expectation over the grid step and z_t.
LossBreakdown exhaustive_single_token_nelbo(const Denoiser& denoiser, const TimeGrid& grid, Token x, NelboForm form);

// The theta-independent constant that diffusion_term_discrete drops, per unit T:
// KL = term / T + dropped_constant.
double dropped_constant(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                        const Vocab& vocab);

// KL(q || p_theta) of one backward step computed from brute_posterior and model_backward.
double brute_step_kl(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                     const TokenDist& predictor, const Vocab& vocab);

struct MdlmReport {
    double marginal = 0.0;
    double kernel = 0.0;
    double posterior = 0.0;
    double discrete_loss = 0.0;
    double continuous_unmasked = 0.0; // max |continuous loss| at z_t != mask
    double max_deviation() const;
};

// Compares the MaskOnly specialization against independently coded masked-diffusion
// formulas over random configurations. Throws ContractError for schedules with rho != 1.
MdlmReport mdlm_equivalence_check(const NoiseSchedule& schedule, int trials, Rng& rng);

// GIDD parameters at one time: alpha_g = rho gamma, beta pi = u_mass u + m_mass m.
struct GiddParams {
    double alpha_g = 1.0;
    double u_mass = 0.0;
    double m_mass = 0.0;
};

GiddParams gidd_translate(const SchedulePoint& point);

// The non-absorbing kernel with the same marginals as the forward process.
TokenDist relaxed_kernel(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_s, const Vocab& vocab);
// alpha_{t|s} z_s + beta_t pi_t - alpha_{t|s} beta_s pi_s.
TokenDist gidd_kernel(const GiddParams& gs, const GiddParams& gt, Token z_s, const Vocab& vocab);
// (alpha'/alpha) delta + (beta pi)' - (alpha'/alpha) beta pi, at an interior point.
std::vector<double> gidd_rate(const SchedulePoint& point, Token z_s, const Vocab& vocab);

struct GiddReport {
    double marginal_composition = 0.0; // relaxed kernel applied to marginal(s) vs marginal(t)
    double kernel_equality = 0.0;      // relaxed vs translated GIDD kernel
    double rate_mask_entry = 0.0;      // |(R - R_gidd)[m] - (1-gamma) rho'/rho|
    double rate_nonmask_entry = 0.0;   // |(R - R_gidd)[v] + (1-gamma)(rho'/rho)/K| over v != m
    double rate_nonmask_max_diff = 0.0; // max |(R - R_gidd)[v]| over v != m
    bool degenerate = false;            // rho == 1: all kernels coincide
    double degenerate_kernel = 0.0;     // max |relaxed - absorbing| when degenerate
};

GiddReport gidd_equivalence_check(const NoiseSchedule& schedule, int trials, Rng& rng);

struct FdEstimate {
    std::size_t group = 0; // index into DenoiserParams::kNames
    std::size_t index = 0; // flat row-major index
    double value = 0.0;
};

// Central differences of the training loss (loss_and_grad seeded with `seed` on every
// evaluation) at `coords_per_group` random coordinates of each parameter group.
std::vector<FdEstimate> finite_diff_grad(const DenoiserParams& params, const TimeGrid& grid,
                                         std::span<const std::vector<Token>> batch, std::uint64_t seed,
                                         double epsilon, int coords_per_group, Rng& rng);

// Analytic entry matching an FdEstimate.
double grad_entry(const DenoiserParams& grads, const FdEstimate& e);

// Index of the candidate whose prompt+candidate concatenation has the highest mean ELBO
// over `num_passes` corruptions. All candidates share one stream seed; ties go to the lowest index.
std::size_t rank_by_elbo(const Denoiser& denoiser, const TimeGrid& grid, std::span<const Token> prompt,
                         std::span<const std::vector<Token>> candidates, int num_passes, Rng& rng);

} // namespace scdd

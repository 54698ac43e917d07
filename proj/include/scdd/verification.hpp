#pragma once

#include "scdd/denoiser.hpp"
#include "scdd/rng.hpp"
#include "scdd/schedule.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace scdd {

struct CheckResult {
    std::string name;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
};

// Deviation must not exceed tolerance; NaN fails.
CheckResult make_check(std::string name, double deviation, double tolerance, std::string detail = {});

// Schedule evaluated at t_i = t0 + (1 - t0) i / T. With t0 > 0 the reconstruction
// term is active.
TimeGrid shifted_grid(const NoiseSchedule& schedule, int T, double t0);

// A random valid schedule of each non-degenerate family.
NoiseSchedule random_schedule(Rng& rng);

// Single-token denoiser with random weights of the given scale.
MlpDenoiser random_denoiser(int K, Rng& rng, double scale = 1.0);

CheckResult check_marginal_composition(std::span<const NoiseSchedule> schedules, int K, int pairs, Rng& rng);
CheckResult check_kernel_stochastic(const NoiseSchedule& schedule, int K, int pairs, Rng& rng);
CheckResult check_posterior_bayes(const NoiseSchedule& schedule, int K, int pairs, Rng& rng);
CheckResult check_backward_validity(const NoiseSchedule& schedule, int K, int trials, Rng& rng);
// Deviation reported as 2 - (smallest observed order) of ||kernel(t, t+dt) - (I + dt R_t)||.
CheckResult check_forward_rate_order(std::span<const NoiseSchedule> schedules, int K, int points, Rng& rng,
                                     double min_order = 1.9);
// Same for model_backward(t-dt, t) against I + dt * backward_rate.
CheckResult check_backward_rate_order(const NoiseSchedule& schedule, int K, int points, Rng& rng,
                                      double min_order = 1.9);
CheckResult check_rate_rows(const NoiseSchedule& schedule, int K, int points, Rng& rng);
CheckResult check_mdlm_reduction(const NoiseSchedule& mask_only, int trials, Rng& rng);
std::vector<CheckResult> check_gidd(const NoiseSchedule& schedule, int trials, Rng& rng);
// Reports the most negative NELBO - NLL gap (as a positive deviation).
CheckResult check_elbo_bound(std::span<const NoiseSchedule> schedules, int K, std::span<const int> Ts,
                             int denoisers, Rng& rng);
CheckResult check_exact_normalization(const NoiseSchedule& schedule, int K, int T, int denoisers, Rng& rng);
CheckResult check_kl_reconstitution(const NoiseSchedule& schedule, int K, int pairs, Rng& rng);
// Deviation reported as 1 - (smallest observed order) of |discrete(T) - continuous|.
CheckResult check_continuous_limit(const NoiseSchedule& schedule, int configs, Rng& rng);
CheckResult check_gradient(const NoiseSchedule& schedule, int coords_per_group, Rng& rng);
CheckResult check_no_remasking(const NoiseSchedule& schedule, long min_position_steps, Rng& rng);
CheckResult check_mask_only_no_corrections(int traces, Rng& rng);
CheckResult check_checkpoint_roundtrip(Rng& rng);

// Full suite against `schedule` (plus fixed companion schedules).
std::vector<CheckResult> run_verification(const NoiseSchedule& schedule, std::uint64_t seed);

void write_verification_csv(std::ostream& out, std::span<const CheckResult> results);
void write_verification_summary(std::ostream& out, std::span<const CheckResult> results);

} // namespace scdd

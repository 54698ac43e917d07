#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scdd {

enum class ScheduleKind { GiddAligned, PeakShifted, MaskOnly };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

// Dual-SNR noise schedule. rho_t is the retain ratio among unmasked tokens,
// gamma_t the probability of not being masked.
//
// GiddAligned and PeakShifted share the closed forms
//   gamma_t = (1 + c_t - t) / (1 + c_t),   rho_t = (1 - t) / (1 + c_t - t),
//   c_t     = B t^(shape*t_peak) (1-t)^(shape*(1-t_peak)),
// with B chosen so the uniform-noise mass gamma_t (1 - rho_t) = c_t / (1 + c_t)
// peaks at p_u when t = t_peak. GiddAligned is the t_peak = 1/2 member.
// MaskOnly has rho == 1 and gamma_t = mask_alpha(t).
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::GiddAligned;
    double p_u = 0.2;
    double t_peak = 0.5;
    double shape = 1.0;
    std::string mask_alpha_name = "linear";
    std::function<double(double)> mask_alpha;

    static NoiseSchedule gidd_aligned(double p_u, double shape = 1.0);
    static NoiseSchedule peak_shifted(double p_u, double t_peak, double shape = 1.0);
    // Named survival functions: "linear" (1 - t) and "cosine" (cos(pi t / 2)).
    static NoiseSchedule mask_only(std::string_view alpha_name = "linear");
    static NoiseSchedule mask_only(std::function<double(double)> alpha, std::string name);

    // Throws InvalidSchedule. Supported exponents satisfy
    // shape * max(t_peak, 1 - t_peak) < 1, which keeps rho and gamma monotone and
    // makes rho_t -> 0 as t -> 1 (shape < 2 for GiddAligned).
    void validate() const;
};

struct SchedulePoint {
    double t = 0.0;
    double rho = 1.0;
    double gamma = 1.0;
    std::optional<double> rho_prime;
    std::optional<double> gamma_prime;

    bool has_derivatives() const { return rho_prime.has_value() && gamma_prime.has_value(); }
    // gamma (1 - rho): marginal probability that the token was drawn from the uniform channel.
    double uniform_mass() const { return gamma * (1.0 - rho); }
};

// Equal-spaced grid t_i = i/T, i = 0..T, plus the clean convention point t_{-1}
// (rho = gamma = 1, no derivatives).
struct TimeGrid {
    int T = 0;
    std::vector<SchedulePoint> points;

    // i in [-1, T].
    const SchedulePoint& at(int i) const { return points.at(static_cast<std::size_t>(i + 1)); }
    // True when z_0 equals the clean data with probability one.
    bool clean_at_zero() const { return at(0).rho == 1.0 && at(0).gamma == 1.0; }
};

SchedulePoint eval_schedule(const NoiseSchedule& schedule, double t);
TimeGrid discretize(const NoiseSchedule& schedule, int T);

} // namespace scdd

#include "scdd/schedule.hpp"

#include "scdd/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace scdd {

namespace {

constexpr double kDiffStep = 1e-6;

struct Closed {
    double rho;
    double gamma;
};

double effective_peak(const NoiseSchedule& s) {
    return s.kind == ScheduleKind::GiddAligned ? 0.5 : s.t_peak;
}

double uniform_coefficient(const NoiseSchedule& s) {
    const double tp = effective_peak(s);
    const double ratio = s.p_u / (1.0 - s.p_u);
    if (s.kind == ScheduleKind::GiddAligned) {
        return std::pow(2.0, s.shape) * ratio;
    }
    return ratio / (std::pow(tp, s.shape * tp) * std::pow(1.0 - tp, s.shape * (1.0 - tp)));
}

double c_of(const NoiseSchedule& s, double B, double t) {
    if (s.kind == ScheduleKind::GiddAligned) {
        return B * std::pow(t * (1.0 - t), s.shape / 2.0);
    }
    const double tp = s.t_peak;
    return B * std::pow(t, s.shape * tp) * std::pow(1.0 - t, s.shape * (1.0 - tp));
}

Closed closed_form(const NoiseSchedule& s, double t) {
    if (s.kind == ScheduleKind::MaskOnly) {
        return {1.0, s.mask_alpha(t)};
    }
    if (t <= 0.0) {
        return {1.0, 1.0};
    }
    if (t >= 1.0) {
        return {0.0, 0.0};
    }
    const double c = c_of(s, uniform_coefficient(s), t);
    return {(1.0 - t) / (1.0 + c - t), (1.0 + c - t) / (1.0 + c)};
}

} // namespace

std::string to_string(ScheduleKind kind) {
    switch (kind) {
    case ScheduleKind::GiddAligned:
        return "gidd_aligned";
    case ScheduleKind::PeakShifted:
        return "peak_shifted";
    case ScheduleKind::MaskOnly:
        return "mask_only";
    }
    return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "gidd_aligned") {
        return ScheduleKind::GiddAligned;
    }
    if (name == "peak_shifted") {
        return ScheduleKind::PeakShifted;
    }
    if (name == "mask_only") {
        return ScheduleKind::MaskOnly;
    }
    throw InvalidSchedule("unknown schedule kind '" + std::string(name) + "'");
}

NoiseSchedule NoiseSchedule::gidd_aligned(double p_u, double shape) {
    NoiseSchedule s;
    s.kind = ScheduleKind::GiddAligned;
    s.p_u = p_u;
    s.t_peak = 0.5;
    s.shape = shape;
    s.validate();
    return s;
}

NoiseSchedule NoiseSchedule::peak_shifted(double p_u, double t_peak, double shape) {
    NoiseSchedule s;
    s.kind = ScheduleKind::PeakShifted;
    s.p_u = p_u;
    s.t_peak = t_peak;
    s.shape = shape;
    s.validate();
    return s;
}

NoiseSchedule NoiseSchedule::mask_only(std::string_view alpha_name) {
    if (alpha_name == "linear") {
        return mask_only([](double t) { return 1.0 - t; }, "linear");
    }
    if (alpha_name == "cosine") {
        return mask_only(
            [](double t) { return t >= 1.0 ? 0.0 : std::cos(std::numbers::pi * t / 2.0); }, "cosine");
    }
    throw InvalidSchedule("unknown mask_alpha '" + std::string(alpha_name) + "'");
}

NoiseSchedule NoiseSchedule::mask_only(std::function<double(double)> alpha, std::string name) {
    NoiseSchedule s;
    s.kind = ScheduleKind::MaskOnly;
    s.p_u = 0.0;
    s.t_peak = 0.5;
    s.mask_alpha = std::move(alpha);
    s.mask_alpha_name = std::move(name);
    s.validate();
    return s;
}

void NoiseSchedule::validate() const {
    if (kind == ScheduleKind::MaskOnly) {
        if (!mask_alpha) {
            throw InvalidSchedule("mask_only schedule requires a survival function");
        }
        if (mask_alpha(0.0) != 1.0 || mask_alpha(1.0) != 0.0) {
            throw InvalidSchedule("mask_only survival function must satisfy alpha(0)=1 and alpha(1)=0");
        }
        double prev = 1.0;
        for (int i = 0; i <= 1000; ++i) {
            const double a = mask_alpha(i / 1000.0);
            if (!(a >= 0.0 && a <= 1.0) || a > prev) {
                throw InvalidSchedule("mask_only survival function must be non-increasing into [0,1]");
            }
            prev = a;
        }
        return;
    }
    if (!(p_u >= 0.0 && p_u < 1.0)) {
        std::ostringstream msg;
        msg << "p_u must lie in [0,1), got " << p_u;
        throw InvalidSchedule(msg.str());
    }
    const double tp = effective_peak(*this);
    if (!(tp > 0.0 && tp < 1.0)) {
        throw InvalidSchedule("t_peak must lie in (0,1)");
    }
    if (!(shape > 0.0) || !(shape * std::max(tp, 1.0 - tp) < 1.0)) {
        std::ostringstream msg;
        msg << "shape " << shape << " unsupported for t_peak " << tp
            << ": need 0 < shape * max(t_peak, 1 - t_peak) < 1";
        throw InvalidSchedule(msg.str());
    }
}

SchedulePoint eval_schedule(const NoiseSchedule& schedule, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        std::ostringstream msg;
        msg << "schedule time " << t << " outside [0,1]";
        throw DomainError(msg.str());
    }
    if (schedule.kind != ScheduleKind::MaskOnly && !(schedule.p_u >= 0.0 && schedule.p_u < 1.0)) {
        throw InvalidSchedule("p_u must lie in [0,1)");
    }

    const Closed v = closed_form(schedule, t);
    SchedulePoint p;
    p.t = t;
    p.rho = v.rho;
    p.gamma = v.gamma;

    const bool interior = t > 0.0 && t < 1.0;
    if (schedule.kind == ScheduleKind::MaskOnly) {
        const double lo = std::max(0.0, t - kDiffStep);
        const double hi = std::min(1.0, t + kDiffStep);
        p.rho_prime = 0.0;
        p.gamma_prime = (schedule.mask_alpha(hi) - schedule.mask_alpha(lo)) / (hi - lo);
    } else if (interior) {
        const NoiseSchedule& s = schedule;
        const double tp = effective_peak(s);
        const double a = s.shape * tp;
        const double b = s.shape * (1.0 - tp);
        const double c = c_of(s, uniform_coefficient(s), t);
        const double dc = c * (a / t - b / (1.0 - t));
        const double one_c = 1.0 + c;
        const double denom = one_c - t;
        p.gamma_prime = -(one_c - t * dc) / (one_c * one_c);
        p.rho_prime = -(c + (1.0 - t) * dc) / (denom * denom);
    } else {
        // One-sided difference at the endpoints, where dc/dt is unbounded.
        const double lo = std::max(0.0, t - kDiffStep);
        const double hi = std::min(1.0, t + kDiffStep);
        const Closed vl = closed_form(schedule, lo);
        const Closed vh = closed_form(schedule, hi);
        p.rho_prime = (vh.rho - vl.rho) / (hi - lo);
        p.gamma_prime = (vh.gamma - vl.gamma) / (hi - lo);
    }
    return p;
}

TimeGrid discretize(const NoiseSchedule& schedule, int T) {
    if (T < 1) {
        throw InvalidArgument("grid needs T >= 1 steps, got " + std::to_string(T));
    }
    schedule.validate();
    TimeGrid grid;
    grid.T = T;
    grid.points.reserve(static_cast<std::size_t>(T) + 2);

    SchedulePoint clean;
    clean.t = -1.0 / T;
    grid.points.push_back(clean);
    for (int i = 0; i <= T; ++i) {
        // i == T is evaluated at exactly 1.0.
        grid.points.push_back(eval_schedule(schedule, i == T ? 1.0 : static_cast<double>(i) / T));
    }
    for (std::size_t i = 1; i < grid.points.size(); ++i) {
        const auto& prev = grid.points[i - 1];
        const auto& cur = grid.points[i];
        if (cur.rho > prev.rho || cur.gamma > prev.gamma) {
            throw InvalidSchedule("schedule is not monotone non-increasing on the grid");
        }
    }
    return grid;
}

} // namespace scdd

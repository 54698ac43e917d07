#include "scdd/verification.hpp"

#include "scdd/backward_process.hpp"
#include "scdd/checkpoint.hpp"
#include "scdd/error.hpp"
#include "scdd/forward_process.hpp"
#include "scdd/objective.hpp"
#include "scdd/oracle.hpp"
#include "scdd/sampler.hpp"
#include "scdd/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace scdd {

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(a[i] - b[i]));
    }
    return d;
}

std::pair<SchedulePoint, SchedulePoint> random_points(const NoiseSchedule& schedule, Rng& rng) {
    double a = 0.0, b = 0.0;
    do {
        a = uniform01(rng);
        b = uniform01(rng);
    } while (a == b);
    return {eval_schedule(schedule, std::min(a, b)), eval_schedule(schedule, std::max(a, b))};
}

TokenDist random_simplex(const Vocab& vocab, Rng& rng) {
    TokenDist p = TokenDist::zeros(vocab);
    double total = 0.0;
    for (int v = 0; v < vocab.K(); ++v) {
        p[v] = -std::log(1.0 - uniform01(rng));
        total += p[v];
    }
    for (int v = 0; v < vocab.K(); ++v) {
        p[v] /= total;
    }
    return p;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

} // namespace

CheckResult make_check(std::string name, double deviation, double tolerance, std::string detail) {
    return {std::move(name), deviation, tolerance, deviation <= tolerance, std::move(detail)};
}

TimeGrid shifted_grid(const NoiseSchedule& schedule, int T, double t0) {
    if (T < 1 || !(t0 >= 0.0 && t0 < 1.0)) {
        throw InvalidArgument("shifted_grid: bad T or t0");
    }
    TimeGrid grid;
    grid.T = T;
    grid.points.push_back(SchedulePoint{t0 - (1.0 - t0) / T, 1.0, 1.0, std::nullopt, std::nullopt});
    for (int i = 0; i <= T; ++i) {
        grid.points.push_back(eval_schedule(schedule, i == T ? 1.0 : t0 + (1.0 - t0) * i / T));
    }
    return grid;
}

NoiseSchedule random_schedule(Rng& rng) {
    const double p_u = 0.05 + 0.5 * uniform01(rng);
    if (uniform01(rng) < 0.5) {
        return NoiseSchedule::gidd_aligned(p_u, 0.5 + 1.2 * uniform01(rng));
    }
    const double tp = 0.2 + 0.6 * uniform01(rng);
    const double max_shape = 1.0 / std::max(tp, 1.0 - tp);
    return NoiseSchedule::peak_shifted(p_u, tp, (0.3 + 0.65 * uniform01(rng)) * max_shape);
}

MlpDenoiser random_denoiser(int K, Rng& rng, double scale) {
    return MlpDenoiser(DenoiserParams::init(ModelDims{K, 6, 12}, rng, scale));
}

CheckResult check_marginal_composition(std::span<const NoiseSchedule> schedules, int K, int pairs, Rng& rng) {
    const Vocab vocab(K);
    double dev = 0.0;
    for (const auto& schedule : schedules) {
        for (int p = 0; p < pairs; ++p) {
            const auto [ps, pt] = random_points(schedule, rng);
            for (Token x = 0; x < K; ++x) {
                const TokenDist ms = marginal(ps, x, vocab);
                std::vector<double> composed(static_cast<std::size_t>(vocab.size()), 0.0);
                for (Token zs = 0; zs < vocab.size(); ++zs) {
                    const TokenDist k = kernel(ps, pt, zs, vocab);
                    for (Token v = 0; v < vocab.size(); ++v) {
                        composed[v] += ms[zs] * k[v];
                    }
                }
                dev = std::max(dev, max_abs_diff(composed, marginal(pt, x, vocab).view()));
            }
        }
    }
    return make_check("marginal_composition", dev, 1e-12);
}

CheckResult check_kernel_stochastic(const NoiseSchedule& schedule, int K, int pairs, Rng& rng) {
    const Vocab vocab(K);
    double dev = 0.0;
    for (int p = 0; p < pairs; ++p) {
        const auto [ps, pt] = random_points(schedule, rng);
        for (Token zs = 0; zs < vocab.size(); ++zs) {
            const TokenDist k = kernel(ps, pt, zs, vocab);
            dev = std::max(dev, std::abs(k.sum() - 1.0));
            for (double v : k.probs) {
                dev = std::max(dev, -v);
            }
        }
        dev = std::max(dev, std::abs(kernel(ps, pt, vocab.mask(), vocab)[vocab.mask()] - 1.0));
    }
    return make_check("kernel_stochastic_absorbing", dev, 1e-12);
}

CheckResult check_posterior_bayes(const NoiseSchedule& schedule, int K, int pairs, Rng& rng) {
    const Vocab vocab(K);
    double dev = 0.0;
    long cases = 0;
    for (int p = 0; p < pairs; ++p) {
        const auto [ps, pt] = random_points(schedule, rng);
        for (Token x = 0; x < K; ++x) {
            const TokenDist q = marginal(pt, x, vocab);
            for (Token zt = 0; zt < vocab.size(); ++zt) {
                if (q[zt] == 0.0) {
                    continue;
                }
                dev = std::max(dev, max_abs_diff(true_posterior(ps, pt, zt, x, vocab).view(),
                                                 brute_posterior(ps, pt, zt, x, vocab).view()));
                ++cases;
            }
        }
    }
    return make_check("posterior_bayes", dev, 1e-12, std::to_string(cases) + " cases");
}

CheckResult check_backward_validity(const NoiseSchedule& schedule, int K, int trials, Rng& rng) {
    const Vocab vocab(K);
    double dev = 0.0;
    for (int i = 0; i < trials; ++i) {
        const auto [ps, pt] = random_points(schedule, rng);
        const Token zt = uniform_index(rng, vocab.size());
        const TokenDist pred = random_simplex(vocab, rng);
        const TokenDist back = model_backward(BackwardStep{ps, pt, zt, pred}, vocab);
        dev = std::max(dev, std::abs(back.sum() - 1.0));
        for (double v : back.probs) {
            dev = std::max(dev, -v);
        }
        if (!vocab.is_mask(zt)) {
            dev = std::max(dev, std::abs(back[vocab.mask()]));
        }
    }
    return make_check("backward_validity", dev, 1e-12);
}

namespace {

// Smallest empirical order across successive halvings; +inf when the error is at roundoff.
// An error below `exact_floor` already at the coarsest step means the expansion is exact
// for this schedule (e.g. linear survival), so no order can be measured.
double empirical_order(const std::vector<double>& errs, double exact_floor) {
    double order = std::numeric_limits<double>::infinity();
    if (errs.empty() || errs.front() <= exact_floor) {
        return order;
    }
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
        if (errs[i + 1] < 1e-13) {
            continue;
        }
        order = std::min(order, std::log2(errs[i] / errs[i + 1]));
    }
    return order;
}

std::string order_detail(double order) {
    return std::isinf(order) ? "exact to roundoff" : "min order " + fmt(order);
}

const double kSteps[] = {1e-2, 5e-3, 2.5e-3};

} // namespace

CheckResult check_forward_rate_order(std::span<const NoiseSchedule> schedules, int K, int points, Rng& rng,
                                     double min_order) {
    const Vocab vocab(K);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& schedule : schedules) {
        for (int p = 0; p < points; ++p) {
            const double t = 0.05 + 0.85 * uniform01(rng);
            const SchedulePoint pt = eval_schedule(schedule, t);
            std::vector<double> errs;
            for (double dt : kSteps) {
                const SchedulePoint pn = eval_schedule(schedule, t + dt);
                double err = 0.0;
                for (Token zs = 0; zs < vocab.size(); ++zs) {
                    const TokenDist k = kernel(pt, pn, zs, vocab);
                    const auto r = forward_rate(pt, zs, vocab);
                    for (Token v = 0; v < vocab.size(); ++v) {
                        err = std::max(err, std::abs(k[v] - ((v == zs ? 1.0 : 0.0) + dt * r[v])));
                    }
                }
                errs.push_back(err);
            }
            worst = std::min(worst, empirical_order(errs, 1e-10));
        }
    }
    const double dev = std::isinf(worst) ? 0.0 : 2.0 - worst;
    return make_check("forward_rate_order", dev, 2.0 - min_order, order_detail(worst));
}

CheckResult check_backward_rate_order(const NoiseSchedule& schedule, int K, int points, Rng& rng, double min_order) {
    const Vocab vocab(K);
    double worst = std::numeric_limits<double>::infinity();
    for (int p = 0; p < points; ++p) {
        const double t = 0.1 + 0.8 * uniform01(rng);
        const SchedulePoint pt = eval_schedule(schedule, t);
        const TokenDist pred = random_simplex(vocab, rng);
        std::vector<double> errs;
        for (double dt : kSteps) {
            const SchedulePoint ps = eval_schedule(schedule, t - dt);
            double err = 0.0;
            for (Token zt = 0; zt < vocab.size(); ++zt) {
                const TokenDist back = model_backward(BackwardStep{ps, pt, zt, pred}, vocab);
                const auto r = backward_rate(pt, zt, pred, vocab);
                for (Token v = 0; v < vocab.size(); ++v) {
                    err = std::max(err, std::abs(back[v] - ((v == zt ? 1.0 : 0.0) + dt * r[v])));
                }
            }
            errs.push_back(err);
        }
        worst = std::min(worst, empirical_order(errs, 1e-10));
    }
    const double dev = std::isinf(worst) ? 0.0 : 2.0 - worst;
    return make_check("backward_rate_order", dev, 2.0 - min_order, order_detail(worst));
}

CheckResult check_rate_rows(const NoiseSchedule& schedule, int K, int points, Rng& rng) {
    const Vocab vocab(K);
    double dev = 0.0;
    for (int p = 0; p < points; ++p) {
        const SchedulePoint pt = eval_schedule(schedule, 0.02 + 0.96 * uniform01(rng));
        const TokenDist pred = random_simplex(vocab, rng);
        for (Token z = 0; z < vocab.size(); ++z) {
            for (const auto& row : {forward_rate(pt, z, vocab), backward_rate(pt, z, pred, vocab)}) {
                double sum = 0.0, scale = 1.0;
                for (Token v = 0; v < vocab.size(); ++v) {
                    sum += row[v];
                    scale = std::max(scale, std::abs(row[v]));
                    if (v != z) {
                        dev = std::max(dev, -row[v] / scale);
                    }
                }
                dev = std::max(dev, std::abs(sum) / scale);
            }
        }
    }
    return make_check("rate_rows_generator", dev, 1e-12);
}

CheckResult check_mdlm_reduction(const NoiseSchedule& mask_only, int trials, Rng& rng) {
    const MdlmReport rep = mdlm_equivalence_check(mask_only, trials, rng);
    std::ostringstream detail;
    detail << "marginal " << fmt(rep.marginal) << ", kernel " << fmt(rep.kernel) << ", posterior "
           << fmt(rep.posterior) << ", loss " << fmt(rep.discrete_loss) << ", continuous at unmasked "
           << fmt(rep.continuous_unmasked);
    CheckResult r = make_check("mdlm_reduction", rep.max_deviation(), 1e-10, detail.str());
    r.pass = r.pass && rep.continuous_unmasked == 0.0;
    return r;
}

std::vector<CheckResult> check_gidd(const NoiseSchedule& schedule, int trials, Rng& rng) {
    const GiddReport rep = gidd_equivalence_check(schedule, trials, rng);
    std::vector<CheckResult> out;
    out.push_back(make_check("gidd_relaxed_marginal", rep.marginal_composition, 1e-12));
    out.push_back(make_check("gidd_kernel_translation", rep.kernel_equality, 1e-12));
    out.push_back(make_check("gidd_rate_mask_entry", rep.rate_mask_entry, 1e-12,
                             "SCDD minus GIDD mask entry equals (1-gamma) rho'/rho"));
    out.push_back(make_check("gidd_rate_nonmask_entries", rep.rate_nonmask_entry, 1e-12,
                             "non-mask entries differ by -(1-gamma)(rho'/rho)/K; max raw difference " +
                                 fmt(rep.rate_nonmask_max_diff)));
    if (rep.degenerate) {
        out.push_back(make_check("gidd_degenerate_coincidence", rep.degenerate_kernel, 1e-12,
                                 "rho == 1: relaxed, GIDD and absorbing kernels coincide"));
    }
    return out;
}

CheckResult check_elbo_bound(std::span<const NoiseSchedule> schedules, int K, std::span<const int> Ts, int denoisers,
                             Rng& rng) {
    const Vocab vocab(K);
    double worst_gap = std::numeric_limits<double>::infinity();
    for (const auto& schedule : schedules) {
        for (int T : Ts) {
            const TimeGrid grid = discretize(schedule, T);
            for (int d = 0; d < denoisers; ++d) {
                const MlpDenoiser den = random_denoiser(K, rng, 0.5 + 1.5 * uniform01(rng));
                const auto mats = single_token_backward_matrices(den, grid);
                const auto recon = single_token_reconstruction_matrix(den, grid);
                for (Token x = 0; x < K; ++x) {
                    const double nll = exact_single_token_nll(mats, recon, x, vocab);
                    const double nelbo = exhaustive_single_token_nelbo(den, grid, x, NelboForm::Bound).total;
                    worst_gap = std::min(worst_gap, nelbo - nll);
                }
            }
        }
    }
    return make_check("elbo_bound", std::max(0.0, -worst_gap), 1e-9, "min gap " + fmt(worst_gap));
}

CheckResult check_exact_normalization(const NoiseSchedule& schedule, int K, int T, int denoisers, Rng& rng) {
    const Vocab vocab(K);
    const TimeGrid grid = shifted_grid(schedule, T, 0.05);
    double dev = 0.0;
    for (int d = 0; d < denoisers; ++d) {
        const MlpDenoiser den = random_denoiser(K, rng);
        const auto mats = single_token_backward_matrices(den, grid);
        const auto recon = single_token_reconstruction_matrix(den, grid);
        double total = 0.0;
        for (Token x = 0; x < K; ++x) {
            total += std::exp(-exact_single_token_nll(mats, recon, x, vocab));
        }
        dev = std::max(dev, std::abs(total - 1.0));
    }
    return make_check("exact_likelihood_normalization", dev, 1e-10);
}

CheckResult check_kl_reconstitution(const NoiseSchedule& schedule, int K, int pairs, Rng& rng) {
    const Vocab vocab(K);
    double dev = 0.0;
    double min_kl = std::numeric_limits<double>::infinity();
    for (int p = 0; p < pairs; ++p) {
        const auto [ps, pt] = random_points(schedule, rng);
        const int T = 1 + uniform_index(rng, 1000);
        for (Token x = 0; x < K; ++x) {
            const TokenDist q = marginal(pt, x, vocab);
            for (Token zt = 0; zt < vocab.size(); ++zt) {
                if (q[zt] == 0.0) {
                    continue;
                }
                const TokenDist pred = random_simplex(vocab, rng);
                const double kl = brute_step_kl(ps, pt, zt, x, pred, vocab);
                const double rebuilt =
                    diffusion_term_discrete(ps, pt, zt, x, pred, T, vocab) / T + dropped_constant(ps, pt, zt, x, vocab);
                const double direct = diffusion_kl_discrete(ps, pt, zt, x, pred, T, vocab) / T;
                dev = std::max({dev, std::abs(rebuilt - kl), std::abs(direct - kl)});
                min_kl = std::min(min_kl, rebuilt);
            }
        }
    }
    dev = std::max(dev, std::max(0.0, -min_kl));
    return make_check("kl_reconstitution_nonnegative", dev, 1e-10, "min KL " + fmt(min_kl));
}

CheckResult check_continuous_limit(const NoiseSchedule& schedule, int configs, Rng& rng) {
    const Vocab vocab(6);
    const int Ts[] = {200, 400, 800, 1600};
    std::vector<double> errs(std::size(Ts), 0.0);
    for (int c = 0; c < configs; ++c) {
        const double t = 0.1 + 0.8 * uniform01(rng);
        const SchedulePoint pt = eval_schedule(schedule, t);
        const Token x = uniform_index(rng, vocab.K());
        const Token zt = uniform01(rng) < 0.3 ? vocab.mask() : uniform_index(rng, vocab.K());
        const TokenDist pred = random_simplex(vocab, rng);
        const double cont = diffusion_term_continuous(pt, zt, x, pred, vocab);
        for (std::size_t i = 0; i < std::size(Ts); ++i) {
            const SchedulePoint ps = eval_schedule(schedule, t - 1.0 / Ts[i]);
            errs[i] += std::abs(diffusion_term_discrete(ps, pt, zt, x, pred, Ts[i], vocab) - cont);
        }
    }
    const double order = empirical_order(errs, 1e-8 * configs);
    const double dev = std::isinf(order) ? 0.0 : 1.0 - order;
    return make_check("continuous_limit_order", dev, 0.1, order_detail(order) + ", error at T=1600 " + fmt(errs.back() / configs));
}

CheckResult check_gradient(const NoiseSchedule& schedule, int coords_per_group, Rng& rng) {
    const ModelDims dims{6, 8, 16};
    const DenoiserParams params = DenoiserParams::init(dims, rng, 0.5);
    const TimeGrid grid = shifted_grid(schedule, 20, 0.05);
    std::vector<std::vector<Token>> batch(4, std::vector<Token>(5));
    for (auto& seq : batch) {
        for (auto& v : seq) {
            v = uniform_index(rng, dims.K);
        }
    }
    const std::uint64_t seed = split_seed(rng);
    Rng local(seed);
    const LossAndGrad lg = loss_and_grad(params, grid, batch, local);
    const auto fd = finite_diff_grad(params, grid, batch, seed, 1e-5, coords_per_group, rng);
    double worst = 0.0;
    for (const auto& e : fd) {
        const double a = grad_entry(lg.grads, e);
        worst = std::max(worst, std::abs(a - e.value) / std::max({std::abs(a), std::abs(e.value), 1e-6}));
    }
    return make_check("gradient_check", worst, 1e-4, std::to_string(fd.size()) + " coordinates");
}

CheckResult check_no_remasking(const NoiseSchedule& schedule, long min_position_steps, Rng& rng) {
    const int K = 6, L = 8, T = 64;
    const TimeGrid grid = discretize(schedule, T);
    const MlpDenoiser den(DenoiserParams::init(ModelDims{K, 8, 16}, rng, 1.0));
    long steps = 0, remask = 0, leftover = 0;
    while (steps < min_position_steps) {
        const SampleTrace tr = sample(den, grid, L, rng);
        remask += tr.remaskings;
        leftover += std::count(tr.final_seq.begin(), tr.final_seq.end(), den.vocab().mask());
        steps += static_cast<long>(L) * T;
    }
    return make_check("no_remasking", static_cast<double>(remask + leftover), 0.0,
                      std::to_string(steps) + " position-steps");
}

CheckResult check_mask_only_no_corrections(int traces, Rng& rng) {
    const TimeGrid grid = discretize(NoiseSchedule::mask_only("linear"), 32);
    const MlpDenoiser den(DenoiserParams::init(ModelDims{6, 8, 16}, rng, 1.0));
    long corrections = 0;
    for (int i = 0; i < traces; ++i) {
        corrections += static_cast<long>(sample(den, grid, 8, rng).corrections.size());
    }
    return make_check("mask_only_zero_corrections", static_cast<double>(corrections), 0.0);
}

CheckResult check_checkpoint_roundtrip(Rng& rng) {
    Checkpoint ckpt;
    ckpt.schedule = random_schedule(rng);
    ckpt.T = 37;
    ckpt.step = 123;
    ckpt.params = DenoiserParams::init(ModelDims{5, 4, 7}, rng, 3.0);
    ckpt.optimizer = OptimizerState::init(ckpt.params);
    ckpt.optimizer.m1 = DenoiserParams::init(ckpt.params.dims, rng, 1e-3);
    ckpt.optimizer.m2 = DenoiserParams::init(ckpt.params.dims, rng, 1e-7);
    ckpt.optimizer.step_count = 123;
    std::stringstream ss;
    write_checkpoint(ss, ckpt);
    const Checkpoint back = read_checkpoint(ss);
    return make_check("checkpoint_roundtrip", bit_equal(ckpt, back) ? 0.0 : 1.0, 0.0);
}

std::vector<CheckResult> run_verification(const NoiseSchedule& schedule, std::uint64_t seed) {
    schedule.validate();
    Rng rng(seed);
    std::vector<NoiseSchedule> family{schedule, random_schedule(rng), random_schedule(rng)};
    const NoiseSchedule mask_only =
        schedule.kind == ScheduleKind::MaskOnly ? schedule : NoiseSchedule::mask_only("linear");

    std::vector<CheckResult> out;
    out.push_back(check_marginal_composition(family, 6, 50, rng));
    out.push_back(check_kernel_stochastic(schedule, 6, 50, rng));
    out.push_back(check_posterior_bayes(schedule, 6, 50, rng));
    out.push_back(check_backward_validity(schedule, 6, 10000, rng));
    out.push_back(check_forward_rate_order(family, 6, 20, rng));
    out.push_back(check_backward_rate_order(schedule, 6, 20, rng));
    out.push_back(check_rate_rows(schedule, 6, 50, rng));
    out.push_back(check_mdlm_reduction(mask_only, 10000, rng));
    for (auto& r : check_gidd(schedule, 1000, rng)) {
        out.push_back(std::move(r));
    }
    const int Ts[] = {2, 4, 8, 16};
    out.push_back(check_elbo_bound(std::span<const NoiseSchedule>(&schedule, 1), 4, Ts, 5, rng));
    out.push_back(check_exact_normalization(schedule, 4, 16, 5, rng));
    out.push_back(check_kl_reconstitution(schedule, 6, 50, rng));
    out.push_back(check_continuous_limit(schedule, 20, rng));
    out.push_back(check_gradient(schedule, 50, rng));
    out.push_back(check_no_remasking(schedule, 100000, rng));
    out.push_back(check_mask_only_no_corrections(50, rng));
    out.push_back(check_checkpoint_roundtrip(rng));
    return out;
}

void write_verification_csv(std::ostream& out, std::span<const CheckResult> results) {
    out << "check,max_deviation,tolerance,pass\n";
    char buf[64];
    for (const auto& r : results) {
        out << r.name << ',';
        std::snprintf(buf, sizeof buf, "%.6e,%.6e,", r.max_deviation, r.tolerance);
        out << buf << (r.pass ? "true" : "false") << '\n';
    }
}

void write_verification_summary(std::ostream& out, std::span<const CheckResult> results) {
    char buf[160];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, "%-4s %-32s dev=%-11.3e tol=%-9.1e", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                      r.max_deviation, r.tolerance);
        out << buf;
        if (!r.detail.empty()) {
            out << "  " << r.detail;
        }
        out << '\n';
    }
}

} // namespace scdd

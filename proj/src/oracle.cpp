#include "scdd/oracle.hpp"

#include "scdd/backward_process.hpp"
#include "scdd/error.hpp"
#include "scdd/forward_process.hpp"
#include "scdd/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scdd {

TokenDist brute_posterior(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                          const Vocab& vocab) {
    vocab.check_clean(x);
    vocab.check_token(z_t);
    const TokenDist prior = marginal(point_s, x, vocab);
    TokenDist out = TokenDist::zeros(vocab);
    double total = 0.0;
    for (Token zs = 0; zs < vocab.size(); ++zs) {
        out[zs] = kernel(point_s, point_t, zs, vocab)[z_t] * prior[zs];
        total += out[zs];
    }
    if (total <= 0.0) {
        throw NullEvent("brute_posterior: z_t has zero probability given x");
    }
    for (auto& v : out.probs) {
        v /= total;
    }
    return out;
}

namespace {

TokenDist predict_single(const Denoiser& denoiser, Token z, double t) {
    const Token seq[1] = {z};
    return denoiser.denoise(seq, t).front();
}

void check_stochastic(const StochasticMatrix& m, std::size_t n, const char* what) {
    if (m.size() != n) {
        throw InvalidArgument(std::string(what) + ": wrong number of rows");
    }
    for (const auto& row : m) {
        if (row.size() != n || !is_simplex(row, 1e-10)) {
            throw InvalidArgument(std::string(what) + ": matrix is not row-stochastic");
        }
    }
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(a[i] - b[i]));
    }
    return d;
}

// Interior time pair s < t drawn uniformly.
std::pair<double, double> random_pair(Rng& rng) {
    double a = 0.0, b = 0.0;
    do {
        a = uniform01(rng);
        b = uniform01(rng);
    } while (a == b || a == 0.0 || b == 0.0);
    return {std::min(a, b), std::max(a, b)};
}

TokenDist random_predictor(const Vocab& vocab, Rng& rng) {
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

double ratio(double num, double den) {
    return den == 0.0 ? 0.0 : num / den;
}

} // namespace

std::vector<StochasticMatrix> single_token_backward_matrices(const Denoiser& denoiser, const TimeGrid& grid) {
    const Vocab& vocab = denoiser.vocab();
    std::vector<StochasticMatrix> out;
    out.reserve(static_cast<std::size_t>(grid.T));
    for (int i = grid.T; i >= 1; --i) {
        const auto& ps = grid.at(i - 1);
        const auto& pt = grid.at(i);
        StochasticMatrix m(static_cast<std::size_t>(vocab.size()));
        for (Token zt = 0; zt < vocab.size(); ++zt) {
            const TokenDist pred = predict_single(denoiser, zt, pt.t);
            m[zt] = model_backward(BackwardStep{ps, pt, zt, pred}, vocab).probs;
        }
        out.push_back(std::move(m));
    }
    return out;
}

StochasticMatrix single_token_reconstruction_matrix(const Denoiser& denoiser, const TimeGrid& grid) {
    const Vocab& vocab = denoiser.vocab();
    const auto& p0 = grid.at(0);
    StochasticMatrix r(static_cast<std::size_t>(vocab.size()));
    for (Token z0 = 0; z0 < vocab.size(); ++z0) {
        r[z0] = reconstruction(p0, z0, predict_single(denoiser, z0, p0.t), vocab).probs;
    }
    return r;
}

double exact_single_token_nll(std::span<const StochasticMatrix> backward_matrices,
                              const StochasticMatrix& reconstruction_matrix, Token x, const Vocab& vocab) {
    vocab.check_clean(x);
    const auto n = static_cast<std::size_t>(vocab.size());
    for (const auto& m : backward_matrices) {
        check_stochastic(m, n, "backward matrix");
    }
    check_stochastic(reconstruction_matrix, n, "reconstruction matrix");
    std::vector<double> row(n, 0.0);
    row[vocab.mask()] = 1.0;
    for (const auto& m : backward_matrices) {
        std::vector<double> next(n, 0.0);
        for (std::size_t a = 0; a < n; ++a) {
            if (row[a] == 0.0) {
                continue;
            }
            for (std::size_t b = 0; b < n; ++b) {
                next[b] += row[a] * m[a][b];
            }
        }
        row.swap(next);
    }
    double px = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        px += row[a] * reconstruction_matrix[a][x];
    }
    return px > 0.0 ? -std::log(px) : std::numeric_limits<double>::infinity();
}

LossBreakdown exhaustive_single_token_nelbo(const Denoiser& denoiser, const TimeGrid& grid, Token x, NelboForm form) {
    const Vocab& vocab = denoiser.vocab();
    vocab.check_clean(x);
    LossBreakdown out;
    for (int i = 1; i <= grid.T; ++i) {
        const auto& ps = grid.at(i - 1);
        const auto& pt = grid.at(i);
        const TokenDist q = marginal(pt, x, vocab);
        for (Token zt = 0; zt < vocab.size(); ++zt) {
            if (q[zt] == 0.0) {
                continue;
            }
            const TokenDist pred = predict_single(denoiser, zt, pt.t);
            const double term = form == NelboForm::Bound
                                    ? diffusion_kl_discrete(ps, pt, zt, x, pred, grid.T, vocab)
                                    : diffusion_term_discrete(ps, pt, zt, x, pred, grid.T, vocab);
            out.diffusion += q[zt] * term / grid.T;
        }
    }
    const auto& p0 = grid.at(0);
    const TokenDist q0 = marginal(p0, x, vocab);
    for (Token z0 = 0; z0 < vocab.size(); ++z0) {
        if (q0[z0] == 0.0) {
            continue;
        }
        out.reconstruction += q0[z0] * reconstruction_term(p0, z0, x, predict_single(denoiser, z0, p0.t), vocab);
    }
    // KL(q(z_1 | x) || all-mask point mass) is zero iff z_1 is masked surely.
    const TokenDist q1 = marginal(grid.at(grid.T), x, vocab);
    out.prior = q1[vocab.mask()] == 1.0 ? 0.0 : std::numeric_limits<double>::infinity();
    out.total = out.reconstruction + out.prior + out.diffusion;
    return out;
}

double dropped_constant(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                        const Vocab& vocab) {
    const TokenDist q = brute_posterior(point_s, point_t, z_t, x, vocab);
    const int K = vocab.K();
    double c = 0.0;
    for (Token v = 0; v < vocab.size(); ++v) {
        if (q[v] > 0.0) {
            c += q[v] * std::log(q[v]);
        }
    }
    if (vocab.is_mask(z_t)) {
        const double w = (point_s.gamma - point_t.gamma) / (1.0 - point_t.gamma);
        const double stay = (1.0 - point_s.gamma) / (1.0 - point_t.gamma);
        for (int v = 0; v < K; ++v) {
            if (q[v] > 0.0) {
                c -= q[v] * std::log(w);
            }
        }
        if (q[vocab.mask()] > 0.0) {
            c -= q[vocab.mask()] * std::log(stay);
        }
        return c;
    }
    if (point_s.rho == point_t.rho) {
        return 0.0;
    }
    for (int v = 0; v < K; ++v) {
        if (q[v] > 0.0) {
            const double trans = (v == z_t ? point_t.rho / point_s.rho : 0.0) +
                                 (point_s.rho - point_t.rho) / point_s.rho / K;
            c -= q[v] * std::log(trans);
        }
    }
    return c;
}

double brute_step_kl(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                     const TokenDist& predictor, const Vocab& vocab) {
    const TokenDist q = brute_posterior(point_s, point_t, z_t, x, vocab);
    const TokenDist p = model_backward(BackwardStep{point_s, point_t, z_t, predictor}, vocab);
    double kl = 0.0;
    for (Token v = 0; v < vocab.size(); ++v) {
        if (q[v] > 0.0) {
            kl += q[v] * std::log(q[v] / p[v]);
        }
    }
    return kl;
}

double MdlmReport::max_deviation() const {
    return std::max({marginal, kernel, posterior, discrete_loss, continuous_unmasked});
}

MdlmReport mdlm_equivalence_check(const NoiseSchedule& schedule, int trials, Rng& rng) {
    if (schedule.kind != ScheduleKind::MaskOnly) {
        throw ContractError("mdlm_equivalence_check requires a mask-only schedule (rho == 1)");
    }
    schedule.validate();
    MdlmReport rep;
    for (int trial = 0; trial < trials; ++trial) {
        const int K = 2 + uniform_index(rng, 7);
        const Vocab vocab(K);
        const Token m = vocab.mask();
        const auto [s, t] = random_pair(rng);
        const SchedulePoint ps = eval_schedule(schedule, s);
        const SchedulePoint pt = eval_schedule(schedule, t);
        const double as = schedule.mask_alpha(s);
        const double at = schedule.mask_alpha(t);
        const Token x = uniform_index(rng, K);
        const Token zs = uniform_index(rng, K + 1);
        const int T = 1 + uniform_index(rng, 1000);
        const TokenDist pred = random_predictor(vocab, rng);

        // Masked-diffusion reference forms.
        std::vector<double> ref(K + 1, 0.0);
        ref[x] = at;
        ref[m] = 1.0 - at;
        rep.marginal = std::max(rep.marginal, max_abs_diff(marginal(pt, x, vocab).view(), ref));

        std::fill(ref.begin(), ref.end(), 0.0);
        const double ats = at / as;
        if (zs == m) {
            ref[m] = 1.0;
        } else {
            ref[zs] = ats;
            ref[m] = 1.0 - ats;
        }
        rep.kernel = std::max(rep.kernel, max_abs_diff(kernel(ps, pt, zs, vocab).view(), ref));

        // Posterior and losses for a z_t reachable from x.
        const Token zt = uniform01(rng) < 0.5 ? m : x;
        std::fill(ref.begin(), ref.end(), 0.0);
        if (zt == m) {
            ref[x] = (as - at) / (1.0 - at);
            ref[m] = (1.0 - as) / (1.0 - at);
        } else {
            ref[zt] = 1.0;
        }
        rep.posterior = std::max(rep.posterior, max_abs_diff(true_posterior(ps, pt, zt, x, vocab).view(), ref));

        const double ref_loss = zt == m ? -T * (as - at) / (1.0 - at) * std::log(pred[x]) : 0.0;
        const double loss = diffusion_term_discrete(ps, pt, zt, x, pred, T, vocab);
        rep.discrete_loss = std::max(rep.discrete_loss, std::abs(loss - ref_loss) / std::max(1.0, std::abs(ref_loss)));

        if (zt != m) {
            rep.continuous_unmasked =
                std::max(rep.continuous_unmasked, std::abs(diffusion_term_continuous(pt, zt, x, pred, vocab)));
        }
    }
    return rep;
}

GiddParams gidd_translate(const SchedulePoint& point) {
    return {point.rho * point.gamma, point.gamma * (1.0 - point.rho), 1.0 - point.gamma};
}

TokenDist relaxed_kernel(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_s, const Vocab& vocab) {
    vocab.check_token(z_s);
    const int K = vocab.K();
    const double g = ratio(point_t.gamma, point_s.gamma);
    const double r = ratio(point_t.rho, point_s.rho);
    TokenDist out = TokenDist::zeros(vocab);
    out[z_s] += g * r;
    for (int v = 0; v < K; ++v) {
        out[v] += point_t.gamma * (1.0 - r) / K;
    }
    out[vocab.mask()] += (1.0 - point_t.gamma) - g * r * (1.0 - point_s.gamma);
    return out;
}

TokenDist gidd_kernel(const GiddParams& gs, const GiddParams& gt, Token z_s, const Vocab& vocab) {
    vocab.check_token(z_s);
    const int K = vocab.K();
    const double a = ratio(gt.alpha_g, gs.alpha_g);
    TokenDist out = TokenDist::zeros(vocab);
    out[z_s] += a;
    for (int v = 0; v < K; ++v) {
        out[v] += (gt.u_mass - a * gs.u_mass) / K;
    }
    out[vocab.mask()] += gt.m_mass - a * gs.m_mass;
    return out;
}

std::vector<double> gidd_rate(const SchedulePoint& point, Token z_s, const Vocab& vocab) {
    if (!point.has_derivatives()) {
        throw ContractError("gidd_rate needs schedule derivatives");
    }
    vocab.check_token(z_s);
    const int K = vocab.K();
    const double rho = point.rho, gamma = point.gamma;
    const double drho = *point.rho_prime, dgamma = *point.gamma_prime;
    const double log_alpha_dot = drho / rho + dgamma / gamma;
    const double u_mass = gamma * (1.0 - rho);
    const double m_mass = 1.0 - gamma;
    const double du = dgamma * (1.0 - rho) - gamma * drho;
    const double dm = -dgamma;
    std::vector<double> row(static_cast<std::size_t>(vocab.size()), 0.0);
    row[z_s] += log_alpha_dot;
    for (int v = 0; v < K; ++v) {
        row[v] += (du - log_alpha_dot * u_mass) / K;
    }
    row[vocab.mask()] += dm - log_alpha_dot * m_mass;
    return row;
}

GiddReport gidd_equivalence_check(const NoiseSchedule& schedule, int trials, Rng& rng) {
    schedule.validate();
    GiddReport rep;
    rep.degenerate = schedule.kind == ScheduleKind::MaskOnly;
    const Vocab vocab(4);
    const int K = vocab.K();
    const Token m = vocab.mask();
    for (int trial = 0; trial < trials; ++trial) {
        const auto [s, t] = random_pair(rng);
        const SchedulePoint ps = eval_schedule(schedule, s);
        const SchedulePoint pt = eval_schedule(schedule, t);
        const GiddParams gs = gidd_translate(ps);
        const GiddParams gt = gidd_translate(pt);

        for (Token x = 0; x < K; ++x) {
            const TokenDist ms = marginal(ps, x, vocab);
            std::vector<double> composed(static_cast<std::size_t>(vocab.size()), 0.0);
            for (Token zs = 0; zs < vocab.size(); ++zs) {
                const TokenDist k = relaxed_kernel(ps, pt, zs, vocab);
                for (Token v = 0; v < vocab.size(); ++v) {
                    composed[v] += ms[zs] * k[v];
                }
            }
            rep.marginal_composition =
                std::max(rep.marginal_composition, max_abs_diff(composed, marginal(pt, x, vocab).view()));
        }
        for (Token zs = 0; zs < vocab.size(); ++zs) {
            const TokenDist relaxed = relaxed_kernel(ps, pt, zs, vocab);
            rep.kernel_equality =
                std::max(rep.kernel_equality, max_abs_diff(relaxed.view(), gidd_kernel(gs, gt, zs, vocab).view()));
            if (rep.degenerate) {
                rep.degenerate_kernel =
                    std::max(rep.degenerate_kernel, max_abs_diff(relaxed.view(), kernel(ps, pt, zs, vocab).view()));
            }
        }
        for (Token zs = 0; zs < K; ++zs) {
            const auto ours = forward_rate(pt, zs, vocab);
            const auto theirs = gidd_rate(pt, zs, vocab);
            const double rr = *pt.rho_prime / pt.rho;
            const double expect_mask = (1.0 - pt.gamma) * rr;
            const double expect_clean = -(1.0 - pt.gamma) * rr / K;
            // Rates scale like 1/(1-t) near t = 1, so compare relative to the entry size.
            const double scale = std::max(1.0, std::abs(ours[m]) + std::abs(theirs[m]));
            rep.rate_mask_entry = std::max(rep.rate_mask_entry, std::abs(ours[m] - theirs[m] - expect_mask) / scale);
            for (Token v = 0; v < K; ++v) {
                const double diff = ours[v] - theirs[v];
                rep.rate_nonmask_entry = std::max(rep.rate_nonmask_entry, std::abs(diff - expect_clean) / scale);
                rep.rate_nonmask_max_diff = std::max(rep.rate_nonmask_max_diff, std::abs(diff));
            }
        }
    }
    return rep;
}

std::vector<FdEstimate> finite_diff_grad(const DenoiserParams& params, const TimeGrid& grid,
                                         std::span<const std::vector<Token>> batch, std::uint64_t seed,
                                         double epsilon, int coords_per_group, Rng& rng) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw InvalidArgument("finite_diff_grad: epsilon must lie in [1e-7, 1e-3]");
    }
    auto loss_at = [&](const DenoiserParams& p) {
        Rng local(seed);
        return loss_and_grad(p, grid, batch, local).loss.total;
    };
    std::vector<FdEstimate> out;
    DenoiserParams work = params;
    const auto tensors = work.tensors();
    for (std::size_t g = 0; g < tensors.size(); ++g) {
        auto& data = tensors[g]->data;
        for (int c = 0; c < coords_per_group; ++c) {
            const auto idx = static_cast<std::size_t>(uniform_index(rng, static_cast<int>(data.size())));
            const double orig = data[idx];
            data[idx] = orig + epsilon;
            const double up = loss_at(work);
            data[idx] = orig - epsilon;
            const double down = loss_at(work);
            data[idx] = orig;
            out.push_back({g, idx, (up - down) / (2.0 * epsilon)});
        }
    }
    return out;
}

double grad_entry(const DenoiserParams& grads, const FdEstimate& e) {
    return grads.tensors()[e.group]->data.at(e.index);
}

std::size_t rank_by_elbo(const Denoiser& denoiser, const TimeGrid& grid, std::span<const Token> prompt,
                         std::span<const std::vector<Token>> candidates, int num_passes, Rng& rng) {
    if (candidates.empty()) {
        throw InvalidArgument("rank_by_elbo: no candidates");
    }
    const std::uint64_t seed = split_seed(rng);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        std::vector<Token> seq(prompt.begin(), prompt.end());
        seq.insert(seq.end(), candidates[c].begin(), candidates[c].end());
        Rng local(seed);
        const double score = -sequence_nelbo(denoiser, grid, seq, num_passes, local).total;
        if (score > best_score) {
            best_score = score;
            best = c;
        }
    }
    return best;
}

} // namespace scdd

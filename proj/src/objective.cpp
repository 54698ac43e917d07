#include "scdd/objective.hpp"

#include "scdd/backward_process.hpp"
#include "scdd/error.hpp"
#include "scdd/forward_process.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace scdd {

namespace {

constexpr double kLogFloor = 1e-300;
constexpr double kInf = std::numeric_limits<double>::infinity();

double floored_log(double v) {
    return std::log(std::max(v, kLogFloor));
}

void warn_degenerate(const char* where) {
    std::cerr << "warning: " << where << ": predictor assigns zero probability to a required token; loss is +inf\n";
}

void zero(std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
}

} // namespace

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
    reconstruction += o.reconstruction;
    prior += o.prior;
    diffusion += o.diffusion;
    total += o.total;
    return *this;
}

LossBreakdown LossBreakdown::scaled(double f) const {
    return {reconstruction * f, prior * f, diffusion * f, total * f};
}

double diffusion_term_discrete(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                               const TokenDist& predictor, int T, const Vocab& vocab, std::span<double> dpredictor) {
    if (T < 1) {
        throw InvalidArgument("T must be positive");
    }
    check_predictor(predictor, vocab);
    const bool want_grad = !dpredictor.empty();
    if (want_grad) {
        if (dpredictor.size() != predictor.size()) {
            throw InvalidArgument("gradient buffer has wrong length");
        }
        zero(dpredictor);
    }
    const int K = vocab.K();
    const double rs = point_s.rho;
    const double rt = point_t.rho;
    const TokenDist q = true_posterior(point_s, point_t, z_t, x, vocab);
    const double smooth_s = (1.0 - rs) / K;

    if (vocab.is_mask(z_t)) {
        if (point_s.gamma == point_t.gamma) {
            return 0.0;
        }
        const double w = (point_s.gamma - point_t.gamma) / (1.0 - point_t.gamma);
        double acc = 0.0;
        for (int v = 0; v < K; ++v) {
            const double qx = (v == x ? rs : 0.0) + smooth_s;
            if (qx == 0.0) {
                continue;
            }
            const double a = rs * predictor[v] + smooth_s;
            if (a <= 0.0) {
                warn_degenerate("diffusion_term_discrete");
                return kInf;
            }
            acc += qx * floored_log(a);
            if (want_grad) {
                dpredictor[v] = -T * w * qx * rs / a;
            }
        }
        return -T * w * acc;
    }

    // Non-mask branch: identity transition when rho does not move.
    if (rs == rt || rs == 0.0) {
        return 0.0;
    }
    const double den = rt * predictor[z_t] + (1.0 - rt) / K;
    if (den <= 0.0) {
        warn_degenerate("diffusion_term_discrete");
        return kInf;
    }
    const double log_den = floored_log(den);
    double acc = 0.0;
    for (int v = 0; v < K; ++v) {
        if (q[v] == 0.0) {
            continue;
        }
        const double a = rs * predictor[v] + smooth_s;
        if (a <= 0.0) {
            warn_degenerate("diffusion_term_discrete");
            return kInf;
        }
        acc += q[v] * (floored_log(a) - log_den);
        if (want_grad) {
            dpredictor[v] += -T * q[v] * rs / a;
        }
    }
    if (want_grad) {
        double qsum = 0.0;
        for (int v = 0; v < K; ++v) {
            qsum += q[v];
        }
        dpredictor[z_t] += T * qsum * rt / den;
    }
    return -T * acc;
}

double diffusion_kl_discrete(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                             const TokenDist& predictor, int T, const Vocab& vocab) {
    const TokenDist q = true_posterior(point_s, point_t, z_t, x, vocab);
    const TokenDist p = model_backward(BackwardStep{point_s, point_t, z_t, predictor}, vocab);
    double kl = 0.0;
    for (std::size_t v = 0; v < q.size(); ++v) {
        if (q[v] == 0.0) {
            continue;
        }
        if (p[v] <= 0.0) {
            warn_degenerate("diffusion_kl_discrete");
            return kInf;
        }
        kl += q[v] * (floored_log(q[v]) - floored_log(p[v]));
    }
    return T * kl;
}

double diffusion_term_continuous(const SchedulePoint& point, Token z_t, Token x, const TokenDist& predictor,
                                 const Vocab& vocab) {
    if (!point.has_derivatives()) {
        throw ContractError("continuous loss needs schedule derivatives");
    }
    if (!(point.t > 0.0 && point.t < 1.0)) {
        throw DomainError("continuous loss is defined at interior times only");
    }
    vocab.check_clean(x);
    vocab.check_token(z_t);
    check_predictor(predictor, vocab);
    const int K = vocab.K();
    const double rho = point.rho;
    const double smooth = (1.0 - rho) / K;
    auto clean = [&](Token v) { return (v == x ? rho : 0.0) + smooth; };
    auto model = [&](Token v) { return rho * predictor[v] + smooth; };

    if (vocab.is_mask(z_t)) {
        const double w = *point.gamma_prime / (1.0 - point.gamma);
        double acc = 0.0;
        for (int v = 0; v < K; ++v) {
            const double a = model(v);
            if (clean(v) == 0.0) {
                continue;
            }
            if (a <= 0.0) {
                warn_degenerate("diffusion_term_continuous");
                return kInf;
            }
            acc += clean(v) * floored_log(a);
        }
        return w * acc;
    }

    const double rp = *point.rho_prime;
    if (rp == 0.0) {
        return 0.0;
    }
    const double own_x = clean(z_t);
    const double own_m = model(z_t);
    if (own_m <= 0.0 || own_x <= 0.0) {
        warn_degenerate("diffusion_term_continuous");
        return kInf;
    }
    double acc = 0.0;
    for (int v = 0; v < K; ++v) {
        if (v == z_t) {
            continue;
        }
        const double a = model(v);
        if (a <= 0.0) {
            warn_degenerate("diffusion_term_continuous");
            return kInf;
        }
        acc += clean(v) * (rp / rho) / K / own_x * (floored_log(a) - floored_log(own_m));
    }
    acc -= rp * (-predictor[z_t] + 1.0 / K) / own_m;
    return acc;
}

double reconstruction_term(const SchedulePoint& point_0, Token z_0, Token x, const TokenDist& predictor,
                           const Vocab& vocab, std::span<double> dpredictor) {
    vocab.check_clean(x);
    const TokenDist r = reconstruction(point_0, z_0, predictor, vocab);
    const bool want_grad = !dpredictor.empty();
    if (want_grad) {
        zero(dpredictor);
    }
    if (r[x] <= 0.0) {
        warn_degenerate("reconstruction_term");
        return kInf;
    }
    if (want_grad) {
        const int K = vocab.K();
        if (vocab.is_mask(z_0)) {
            dpredictor[x] = -1.0 / predictor[x];
        } else if (point_0.rho != 1.0) {
            // r(x) = p_x / den * trans(x) with den = rho_0 p_{z_0} + (1 - rho_0)/K.
            const double den = point_0.rho * predictor[z_0] + (1.0 - point_0.rho) / K;
            dpredictor[x] += -1.0 / predictor[x];
            dpredictor[z_0] += point_0.rho / den;
        }
    }
    return -floored_log(r[x]);
}

Corruption draw_corruption(const TimeGrid& grid, std::span<const Token> x_seq, const Vocab& vocab, Rng& rng) {
    if (x_seq.empty()) {
        throw InvalidArgument("cannot corrupt an empty sequence");
    }
    Corruption c;
    c.step = 1 + uniform_index(rng, grid.T);
    c.z_t = sample_forward(x_seq, grid.at(c.step), vocab, rng).z;
    if (!grid.clean_at_zero()) {
        c.z_0 = sample_forward(x_seq, grid.at(0), vocab, rng).z;
    }
    return c;
}

LossBreakdown evaluate_corruption(const Denoiser& denoiser, const TimeGrid& grid, std::span<const Token> x_seq,
                                  const Corruption& corruption, NelboForm form) {
    const Vocab& vocab = denoiser.vocab();
    const auto& ps = grid.at(corruption.step - 1);
    const auto& pt = grid.at(corruption.step);
    LossBreakdown out;

    const auto preds = denoiser.denoise(corruption.z_t, pt.t);
    for (std::size_t l = 0; l < x_seq.size(); ++l) {
        out.diffusion += form == NelboForm::Bound
                             ? diffusion_kl_discrete(ps, pt, corruption.z_t[l], x_seq[l], preds[l], grid.T, vocab)
                             : diffusion_term_discrete(ps, pt, corruption.z_t[l], x_seq[l], preds[l], grid.T, vocab);
    }
    if (!corruption.z_0.empty()) {
        const auto& p0 = grid.at(0);
        const auto preds0 = denoiser.denoise(corruption.z_0, p0.t);
        for (std::size_t l = 0; l < x_seq.size(); ++l) {
            out.reconstruction += reconstruction_term(p0, corruption.z_0[l], x_seq[l], preds0[l], vocab);
        }
    }
    out.total = out.reconstruction + out.prior + out.diffusion;
    return out;
}

LossBreakdown sequence_nelbo(const Denoiser& denoiser, const TimeGrid& grid, std::span<const Token> x_seq, int num_mc,
                             Rng& rng, NelboForm form) {
    if (num_mc < 1) {
        throw InvalidArgument("sequence_nelbo needs at least one Monte-Carlo draw");
    }
    if (x_seq.empty()) {
        throw InvalidArgument("sequence_nelbo needs a non-empty sequence");
    }
    LossBreakdown acc;
    for (int i = 0; i < num_mc; ++i) {
        const Corruption c = draw_corruption(grid, x_seq, denoiser.vocab(), rng);
        acc += evaluate_corruption(denoiser, grid, x_seq, c, form);
    }
    return acc.scaled(1.0 / num_mc);
}

double validation_perplexity(const Denoiser& denoiser, const TimeGrid& grid,
                             std::span<const std::vector<Token>> corpus, int num_mc, Rng& rng) {
    if (corpus.empty()) {
        throw InvalidArgument("validation corpus is empty");
    }
    double total = 0.0;
    double tokens = 0.0;
    for (const auto& seq : corpus) {
        total += sequence_nelbo(denoiser, grid, seq, num_mc, rng, NelboForm::Bound).total;
        tokens += static_cast<double>(seq.size());
    }
    return std::exp(total / tokens);
}

} // namespace scdd

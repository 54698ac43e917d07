#include "scdd/backward_process.hpp"

#include "scdd/error.hpp"

#include <cmath>
#include <sstream>

namespace scdd {

namespace {

void check_order(const SchedulePoint& s, const SchedulePoint& t) {
    if (!(s.t < t.t)) {
        std::ostringstream msg;
        msg << "backward step needs s < t, got s=" << s.t << " t=" << t.t;
        throw OrderingError(msg.str());
    }
}

// Mask-branch probabilities: z_t = m.
TokenDist from_mask(const SchedulePoint& s, const SchedulePoint& t, const TokenDist& predictor,
                    const Vocab& vocab) {
    const int K = vocab.K();
    TokenDist out = TokenDist::zeros(vocab);
    if (s.gamma == t.gamma) {
        out[K] = 1.0;
        return out;
    }
    if (t.gamma == 1.0) {
        throw NullEvent("z_t = mask has probability zero when gamma_t = 1");
    }
    const double w = (s.gamma - t.gamma) / (1.0 - t.gamma);
    const double smooth = (1.0 - s.rho) / K;
    for (int v = 0; v < K; ++v) {
        out[v] = w * (s.rho * predictor[v] + smooth);
    }
    out[K] = (1.0 - s.gamma) / (1.0 - t.gamma);
    return out;
}

} // namespace

void check_predictor(const TokenDist& predictor, const Vocab& vocab) {
    if (predictor.size() != static_cast<std::size_t>(vocab.size())) {
        throw ConstraintViolation("predictor has wrong length");
    }
    if (predictor[vocab.mask()] != 0.0) {
        throw ConstraintViolation("predictor assigns mass to the mask token");
    }
    if (!is_simplex(predictor.view(), 1e-9)) {
        throw ConstraintViolation("predictor is not a probability vector");
    }
}

TokenDist true_posterior(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                         const Vocab& vocab) {
    check_order(point_s, point_t);
    vocab.check_clean(x);
    vocab.check_token(z_t);
    const int K = vocab.K();
    const double rs = point_s.rho;
    const double rt = point_t.rho;

    if (vocab.is_mask(z_t)) {
        TokenDist out = TokenDist::zeros(vocab);
        if (point_s.gamma == point_t.gamma) {
            out[K] = 1.0;
            return out;
        }
        if (point_t.gamma == 1.0) {
            throw NullEvent("z_t = mask has probability zero when gamma_t = 1");
        }
        const double w = (point_s.gamma - point_t.gamma) / (1.0 - point_t.gamma);
        const double smooth = (1.0 - rs) / K;
        for (int v = 0; v < K; ++v) {
            out[v] = w * ((v == x ? rs : 0.0) + smooth);
        }
        out[K] = (1.0 - point_s.gamma) / (1.0 - point_t.gamma);
        return out;
    }

    TokenDist out = TokenDist::zeros(vocab);
    if (rs == 0.0) {
        for (int v = 0; v < K; ++v) {
            out[v] = 1.0 / K;
        }
        return out;
    }
    if (rs == rt) {
        out[z_t] = 1.0;
        return out;
    }
    const double den = (z_t == x ? rt : 0.0) + (1.0 - rt) / K;
    const double keep = rt / rs;
    const double jump = (rs - rt) / rs / K;
    for (int v = 0; v < K; ++v) {
        const double num = (v == x ? rs : 0.0) + (1.0 - rs) / K;
        out[v] = num / den * ((v == z_t ? keep : 0.0) + jump);
    }
    return out;
}

TokenDist model_backward(const BackwardStep& step, const Vocab& vocab) {
    check_order(step.point_s, step.point_t);
    check_predictor(step.predictor, vocab);
    vocab.check_token(step.z_t);
    const int K = vocab.K();
    const TokenDist& p = step.predictor;
    const double rs = step.point_s.rho;
    const double rt = step.point_t.rho;

    if (vocab.is_mask(step.z_t)) {
        return from_mask(step.point_s, step.point_t, p, vocab);
    }

    TokenDist out = TokenDist::zeros(vocab);
    if (rs == 0.0) {
        for (int v = 0; v < K; ++v) {
            out[v] = 1.0 / K;
        }
        return out;
    }
    if (rs == rt) {
        out[step.z_t] = 1.0;
        return out;
    }
    const double den = rt * p[step.z_t] + (1.0 - rt) / K;
    const double keep = rt / rs;
    const double jump = (rs - rt) / rs / K;
    for (int v = 0; v < K; ++v) {
        const double num = rs * p[v] + (1.0 - rs) / K;
        out[v] = num / den * ((v == step.z_t ? keep : 0.0) + jump);
    }
    return out;
}

TokenDist reconstruction(const SchedulePoint& point_0, Token z_0, const TokenDist& predictor, const Vocab& vocab) {
    check_predictor(predictor, vocab);
    vocab.check_token(z_0);
    if (vocab.is_mask(z_0)) {
        return predictor;
    }
    SchedulePoint clean;
    clean.t = point_0.t - 1.0;
    return model_backward(BackwardStep{clean, point_0, z_0, predictor}, vocab);
}

std::vector<double> backward_rate(const SchedulePoint& point, Token z_t, const TokenDist& predictor,
                                  const Vocab& vocab) {
    if (!point.has_derivatives()) {
        throw ContractError("backward rate needs schedule derivatives");
    }
    if (!(point.t > 0.0 && point.t < 1.0) || point.rho <= 0.0 || point.gamma >= 1.0) {
        throw DomainError("backward rate is defined at interior times only");
    }
    check_predictor(predictor, vocab);
    vocab.check_token(z_t);
    const int K = vocab.K();
    const double rho = point.rho;
    std::vector<double> row(static_cast<std::size_t>(vocab.size()), 0.0);
    auto smoothed = [&](Token v) { return rho * predictor[v] + (1.0 - rho) / K; };

    if (vocab.is_mask(z_t)) {
        const double lg = *point.gamma_prime / (1.0 - point.gamma);
        for (int v = 0; v < K; ++v) {
            row[v] = -lg * smoothed(v);
        }
        row[K] = lg;
        return row;
    }
    const double lr = *point.rho_prime / rho;
    if (lr == 0.0) {
        return row;
    }
    const double own = smoothed(z_t);
    for (int v = 0; v < K; ++v) {
        row[v] = -lr / K * smoothed(v) / own;
    }
    row[z_t] = lr / K * (1.0 - own) / own;
    return row;
}

} // namespace scdd

#include "scdd/forward_process.hpp"

#include "scdd/error.hpp"

#include <sstream>

namespace scdd {

namespace {

double safe_ratio(double num, double den) {
    return den == 0.0 ? 0.0 : num / den;
}

} // namespace

TokenDist marginal(const SchedulePoint& point, Token x, const Vocab& vocab) {
    vocab.check_clean(x);
    const int K = vocab.K();
    const double spread = point.gamma * (1.0 - point.rho) / K;
    TokenDist d = TokenDist::zeros(vocab);
    for (int v = 0; v < K; ++v) {
        d[v] = spread;
    }
    d[x] += point.gamma * point.rho;
    d[vocab.mask()] = 1.0 - point.gamma;
    return d;
}

TokenDist kernel(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_s, const Vocab& vocab) {
    if (!(point_s.t < point_t.t)) {
        std::ostringstream msg;
        msg << "forward kernel needs s < t, got s=" << point_s.t << " t=" << point_t.t;
        throw OrderingError(msg.str());
    }
    vocab.check_token(z_s);
    if (vocab.is_mask(z_s)) {
        return TokenDist::one_hot(vocab, vocab.mask());
    }
    const int K = vocab.K();
    const double rho_ts = safe_ratio(point_t.rho, point_s.rho);
    const double gamma_ts = safe_ratio(point_t.gamma, point_s.gamma);
    const double spread = (1.0 - rho_ts) * gamma_ts / K;
    TokenDist d = TokenDist::zeros(vocab);
    for (int v = 0; v < K; ++v) {
        d[v] = spread;
    }
    d[z_s] = rho_ts * gamma_ts + spread;
    d[vocab.mask()] = 1.0 - gamma_ts;
    return d;
}

ForwardSample sample_forward(std::span<const Token> x_seq, const SchedulePoint& point, const Vocab& vocab,
                             Rng& rng) {
    for (Token x : x_seq) {
        if (!vocab.contains(x) || vocab.is_mask(x)) {
            throw InvalidArgument("clean data may not contain the mask token or out-of-range tokens");
        }
    }
    const double retain = point.gamma * point.rho;
    ForwardSample out;
    out.z.reserve(x_seq.size());
    out.tags.reserve(x_seq.size());
    for (Token x : x_seq) {
        const double u = uniform01(rng);
        if (u < retain) {
            out.z.push_back(x);
            out.tags.push_back(ChannelTag::Retain);
        } else if (u < point.gamma) {
            out.z.push_back(uniform_index(rng, vocab.K()));
            out.tags.push_back(ChannelTag::Uniform);
        } else {
            out.z.push_back(vocab.mask());
            out.tags.push_back(ChannelTag::Masked);
        }
    }
    return out;
}

std::vector<double> forward_rate(const SchedulePoint& point, Token z_s, const Vocab& vocab) {
    if (!point.has_derivatives()) {
        throw ContractError("forward rate needs schedule derivatives");
    }
    if (!(point.t > 0.0 && point.t < 1.0) || point.rho <= 0.0 || point.gamma <= 0.0) {
        throw DomainError("forward rate is defined at interior times only");
    }
    vocab.check_token(z_s);
    std::vector<double> row(static_cast<std::size_t>(vocab.size()), 0.0);
    if (vocab.is_mask(z_s)) {
        return row;
    }
    const int K = vocab.K();
    const double lr = *point.rho_prime / point.rho;
    const double lg = *point.gamma_prime / point.gamma;
    for (int v = 0; v < K; ++v) {
        row[v] = -lr / K;
    }
    row[z_s] = lg + lr - lr / K;
    row[K] = -lg;
    return row;
}

} // namespace scdd

#include "scdd/sampler.hpp"

#include "scdd/backward_process.hpp"
#include "scdd/error.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace scdd {

TokenDist nucleus_filter(const TokenDist& predictor, double p) {
    if (!(p > 0.0 && p <= 1.0)) {
        throw InvalidArgument("nucleus_p must lie in (0, 1]");
    }
    std::vector<std::size_t> order(predictor.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return predictor[a] > predictor[b]; });
    TokenDist out(std::vector<double>(predictor.size(), 0.0));
    double mass = 0.0;
    for (std::size_t idx : order) {
        if (predictor[idx] <= 0.0) {
            break;
        }
        out[idx] = predictor[idx];
        mass += predictor[idx];
        if (mass >= p) {
            break;
        }
    }
    for (auto& v : out.probs) {
        v /= mass;
    }
    return out;
}

SampleTrace sample(const Denoiser& denoiser, const TimeGrid& grid, int L, Rng& rng, std::optional<double> nucleus_p) {
    if (L < 1) {
        throw InvalidArgument("sample: L must be positive");
    }
    if (grid.T < 1 || grid.points.size() != static_cast<std::size_t>(grid.T) + 2) {
        throw InvalidArgument("sample: invalid time grid");
    }
    if (nucleus_p && !(*nucleus_p > 0.0 && *nucleus_p <= 1.0)) {
        throw InvalidArgument("nucleus_p must lie in (0, 1]");
    }
    const Vocab& vocab = denoiser.vocab();
    const Token mask = vocab.mask();

    SampleTrace trace;
    trace.L = L;
    trace.T = grid.T;
    std::vector<Token> z(static_cast<std::size_t>(L), mask);
    trace.steps.push_back({grid.at(grid.T).t, z});

    auto record = [&](int step, const std::vector<Token>& before, const std::vector<Token>& after) {
        for (int l = 0; l < L; ++l) {
            const Token a = before[l];
            const Token b = after[l];
            if (a == b) {
                continue;
            }
            if (a == mask) {
                ++trace.unmaskings;
            } else if (b == mask) {
                ++trace.remaskings;
            } else {
                trace.corrections.push_back({step, l, a, b});
            }
        }
    };

    for (int i = grid.T; i >= 1; --i) {
        const auto& pt = grid.at(i);
        const auto& ps = grid.at(i - 1);
        const auto preds = denoiser.denoise(z, pt.t);
        std::vector<Token> next(z.size());
        for (int l = 0; l < L; ++l) {
            const TokenDist pred = nucleus_p ? nucleus_filter(preds[l], *nucleus_p) : preds[l];
            const TokenDist back = model_backward(BackwardStep{ps, pt, z[l], pred}, vocab);
            next[l] = draw_categorical(back.view(), rng);
        }
        record(grid.T - i + 1, z, next);
        z = std::move(next);
        trace.steps.push_back({ps.t, z});
    }

    if (std::find(z.begin(), z.end(), mask) != z.end()) {
        const auto& p0 = grid.at(0);
        const auto preds = denoiser.denoise(z, p0.t);
        std::vector<Token> next = z;
        for (int l = 0; l < L; ++l) {
            if (z[l] == mask) {
                const TokenDist pred = nucleus_p ? nucleus_filter(preds[l], *nucleus_p) : preds[l];
                next[l] = draw_categorical(pred.view(), rng);
            }
        }
        record(grid.T + 1, z, next);
        z = std::move(next);
        trace.steps.push_back({grid.at(-1).t, z});
    }
    trace.final_seq = z;
    return trace;
}

double correction_rate(const SampleTrace& trace) {
    if (trace.L < 1) {
        throw InvalidArgument("correction_rate: trace has no positions");
    }
    return static_cast<double>(trace.corrections.size()) / trace.L;
}

double correction_rate_per_step(const SampleTrace& trace, int N) {
    if (N != trace.T) {
        throw InvalidArgument("correction_rate_per_step: N does not match the trace's step count");
    }
    return correction_rate(trace) / N;
}

std::vector<std::pair<int, double>> pooled_correction_curve(std::span<const SampleTrace> traces) {
    if (traces.empty()) {
        return {};
    }
    const int T = traces.front().T;
    std::vector<long> per_step(static_cast<std::size_t>(T) + 2, 0);
    long total = 0;
    for (const auto& tr : traces) {
        if (tr.T != T) {
            throw InvalidArgument("pooled_correction_curve: traces have different step counts");
        }
        for (const auto& e : tr.corrections) {
            per_step.at(static_cast<std::size_t>(e.step)) += 1;
            ++total;
        }
    }
    std::vector<std::pair<int, double>> curve;
    curve.reserve(static_cast<std::size_t>(T));
    long running = 0;
    for (int s = 1; s <= T; ++s) {
        running += per_step[static_cast<std::size_t>(s)];
        curve.emplace_back(s, total == 0 ? 0.0 : static_cast<double>(running) / static_cast<double>(total));
    }
    return curve;
}

std::vector<std::pair<int, double>> cumulative_correction_curve(const SampleTrace& trace) {
    return pooled_correction_curve(std::span<const SampleTrace>(&trace, 1));
}

void write_trace(std::ostream& out, const SampleTrace& trace) {
    for (const auto& snap : trace.steps) {
        for (std::size_t l = 0; l < snap.z.size(); ++l) {
            out << (l ? " " : "") << snap.z[l];
        }
        out << '\n';
    }
    for (const auto& e : trace.corrections) {
        out << "# " << e.step << ' ' << e.pos << ' ' << e.from << ' ' << e.to << '\n';
    }
}

} // namespace scdd

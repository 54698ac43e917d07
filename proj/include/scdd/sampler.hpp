#pragma once

#include "scdd/denoiser.hpp"
#include "scdd/rng.hpp"
#include "scdd/schedule.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace scdd {

struct Snapshot {
    double t = 1.0;
    std::vector<Token> z;
};

// A non-mask token replaced by a different non-mask token. `step` counts denoising
// steps in generation order: step s is the transition t_{T-s+1} -> t_{T-s}.
struct CorrectionEvent {
    int step = 0;
    int pos = 0;
    Token from = 0;
    Token to = 0;
    bool operator==(const CorrectionEvent&) const = default;
};

struct SampleTrace {
    int L = 0;
    int T = 0; // number of denoising steps
    std::vector<Snapshot> steps; // t_T (all mask), ..., t_0, then the cleaned output
    std::vector<CorrectionEvent> corrections;
    long unmaskings = 0;
    long remaskings = 0; // structurally zero; counted to prove it
    std::vector<Token> final_seq;
};

// Keeps the smallest set of most probable tokens with cumulative mass >= p and renormalizes.
// Ties are broken by lower token index.
TokenDist nucleus_filter(const TokenDist& predictor, double p);

// Ancestral sampling from the all-mask prior down the grid, then one reconstruction
// pass for positions still masked at t_0.
SampleTrace sample(const Denoiser& denoiser, const TimeGrid& grid, int L, Rng& rng,
                   std::optional<double> nucleus_p = std::nullopt);

double correction_rate(const SampleTrace& trace);
// Throws InvalidArgument unless N equals trace.T.
double correction_rate_per_step(const SampleTrace& trace, int N);

// (step, fraction of all corrections made at steps <= step) for step = 1..T.
// All zeros when there are no corrections.
std::vector<std::pair<int, double>> cumulative_correction_curve(const SampleTrace& trace);

// Same curve pooled over traces sharing one T.
std::vector<std::pair<int, double>> pooled_correction_curve(std::span<const SampleTrace> traces);

// One snapshot per line (space-separated indices) then `# step pos from to` lines.
void write_trace(std::ostream& out, const SampleTrace& trace);

} // namespace scdd
